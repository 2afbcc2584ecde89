"""Domain modules of the tempdata pipeline.

One module per stage, bottom-up::

    from tempdata.core.maze import GridMaze, load_layout
    from tempdata.core.dataset import label_goals, sample_batch
    from tempdata.core.representation import train_repr
    from tempdata.core.dynamics import train_dynamics
    from tempdata.core.augmentation import refresh
    from tempdata.core.policy import PolicyLearner, evaluate
    from tempdata.core.oracle import bfs_distance, value_iteration
"""
