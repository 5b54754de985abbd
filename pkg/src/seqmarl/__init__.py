"""Sequential-rollout multi-agent RL: models, environments, training, evaluation."""

__version__ = "0.1.0"
