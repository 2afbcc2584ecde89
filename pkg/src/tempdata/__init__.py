"""Temporal-distance-aware offline model-based RL on small maze MDPs."""
