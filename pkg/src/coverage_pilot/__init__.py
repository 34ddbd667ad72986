"""Coverage-search planning engine for a single aerial vehicle on a 2-D grid.

Subpackages cover the workspace model (gridworld), radar-style localization
(localization), the plan proposer boundary (proposer), tree search (mcts),
the mission loop (mission), dataset collection (dataset), the benchmark
harness (bench), the ground-station service (service), and the CLI (cli).
"""

__version__ = "0.1.0"
