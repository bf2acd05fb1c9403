"""High-order and differentiable Markov models for spectrum prediction."""
