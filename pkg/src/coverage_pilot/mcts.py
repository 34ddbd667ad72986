"""Tree search over proposer actions: UCT selection, four-action expansion,
physics-informed scoring, and max-child value back-propagation.

One search builds one tree. The root holds a freshly generated trajectory;
each rollout walks down from the root, at every stop drawing one applicable
action (generate at the root, regenerate on constraint violations, fine-tune
or evaluate on valid candidates), expanding via the proposer, scoring the
result, and back-propagating values, then descending along the best UCT
child. A rollout ends when its node chain reaches max_depth, the current
candidate's simulated coverage passes terminal_cr, or an evaluation verdict
says no further exploration is needed.

Scoring: Q = c1 * coverage_fraction - c2 * revisit_fraction + c3 * compliance
for valid candidates, 0 otherwise. Coverage counts are cumulative: the
candidate trajectory is simulated on top of the coverage state handed to the
search, so mid-mission replans are scored against what is left to cover.

Back-propagation blends each ancestor toward its best child:
Q(s) <- (1 - alpha) * Q(s) + alpha * max_children Q. Blended values steer
UCT descent; candidate extraction at the end re-scores each rollout's
terminal candidate directly (coverage terms plus its cached compliance), so
the reported best is the argmax of candidate merit, not of blended tree
values.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field

from .gridworld import (
    CoverageMap,
    GridMap,
    Trajectory,
    apply_path,
    coverage_sets,
    validate_path,
)
from .proposer import (
    ActionKind,
    BackendUnavailableError,
    Instruction,
    ParseError,
    ProposerAction,
    feedback_from_report,
)


class ApplicabilityError(ValueError):
    """An action was attempted on a node that does not admit it."""


@dataclass
class SearchNode:
    id: int
    trajectory: Trajectory
    q_value: float = 0.0
    visits: int = 0
    parent: int | None = None
    children: list[int] = field(default_factory=list)
    produced_by: ActionKind = ActionKind.GENERATE
    feedback: str | None = None
    valid: bool = True
    compliance: float | None = None
    verdict: bool | None = None
    sim_cr: float = 0.0


class SearchTree:
    """Append-only node store; node ids are list indices."""

    def __init__(self):
        self.nodes: list[SearchNode] = []

    def __getitem__(self, node_id: int) -> SearchNode:
        return self.nodes[node_id]

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def root(self) -> SearchNode:
        return self.nodes[0]

    def add(self, node: SearchNode) -> int:
        node.id = len(self.nodes)
        self.nodes.append(node)
        if node.parent is not None:
            self.nodes[node.parent].children.append(node.id)
        return node.id


@dataclass(frozen=True)
class MctsConfig:
    omega: float = 1.4
    epsilon: float = 1e-6
    alpha: float = 0.5
    weights: tuple[float, float, float] = (1.0, 0.5, 0.5)
    n_rollouts: int = 8
    max_depth: int = 6
    terminal_cr: float = 0.95

    def __post_init__(self):
        if self.omega < 0:
            raise ValueError("omega must be nonnegative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if any(w <= 0 for w in self.weights):
            raise ValueError("weights must all be positive")
        if self.n_rollouts < 0:
            raise ValueError("n_rollouts must be nonnegative")
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")

    def digest(self) -> str:
        payload = {
            "omega": self.omega,
            "epsilon": self.epsilon,
            "alpha": self.alpha,
            "weights": list(self.weights),
            "n_rollouts": self.n_rollouts,
            "max_depth": self.max_depth,
            "terminal_cr": self.terminal_cr,
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class SearchResult:
    candidates: list[Trajectory]
    best: Trajectory | None
    best_q: float
    tree: SearchTree
    rollout_log: list[dict]
    candidate_node_ids: list[int] = field(default_factory=list)
    best_node_id: int = 0
    error: str | None = None


def uct_score(q: float, n_self: int, n_parent: int, omega: float, epsilon: float) -> float:
    """Selection score: Q plus the visit-count exploration bonus.

    The bonus is omega * sqrt(ln(n_parent + 1) / (n_self + epsilon)); the +1
    and epsilon keep it finite at zero visits.
    """
    return q + omega * math.sqrt(math.log(n_parent + 1) / (n_self + epsilon))


def select_leaf(tree: SearchTree, config: MctsConfig) -> int:
    """Descend from the root along max-UCT children; return the first childless node.

    Ties resolve to the lowest node id (children are stored in creation
    order, so the first strict maximum wins).
    """
    node = tree.root
    while node.children:
        best_id = node.children[0]
        best_u = uct_score(
            tree[best_id].q_value, tree[best_id].visits, node.visits, config.omega, config.epsilon
        )
        for cid in node.children[1:]:
            u = uct_score(tree[cid].q_value, tree[cid].visits, node.visits, config.omega, config.epsilon)
            if u > best_u:
                best_id, best_u = cid, u
        node = tree[best_id]
    return node.id


def applicable_actions(tree: SearchTree, node_id: int) -> list[ActionKind]:
    """Actions admissible at a node, in fixed order for deterministic draws.

    Generate fires only at the root; Regenerate only on nodes carrying
    violations; Finetune on any valid node; Evaluate on valid nodes not yet
    evaluated (a second evaluation adds no information).
    """
    node = tree[node_id]
    acts: list[ActionKind] = []
    if node_id == 0:
        acts.append(ActionKind.GENERATE)
    if not node.valid:
        acts.append(ActionKind.REGENERATE)
    else:
        acts.append(ActionKind.FINETUNE)
        if node.compliance is None:
            acts.append(ActionKind.EVALUATE)
    return acts


def score_node(
    node: SearchNode,
    grid: GridMap,
    coverage_before: CoverageMap,
    weights: tuple[float, float, float],
    compliance: float,
) -> float:
    """Physics-informed reward of the node's trajectory.

    Simulates the trajectory from coverage_before, then
    Q = c1 * |visited| / |free| - c2 * |revisited| / |visited| + c3 * compliance.
    Invalid nodes score 0; an empty visited set contributes no revisit
    penalty (0/0 reads as 0).
    """
    if not node.valid:
        return 0.0
    c1, c2, c3 = weights
    sim = apply_path(coverage_before, grid, node.trajectory)
    n_free, n_vis, n_rev = coverage_sets(sim, grid)
    cover_term = n_vis / n_free if n_free else 0.0
    revisit_term = n_rev / n_vis if n_vis else 0.0
    return c1 * cover_term - c2 * revisit_term + c3 * compliance


def backpropagate(tree: SearchTree, from_node_id: int, alpha: float) -> None:
    """Blend each ancestor toward its current best child, parent first.

    Walks from the node's parent up to the root, applying
    Q(s) <- (1 - alpha) * Q(s) + alpha * max_children Q(s'). Nodes carrying
    violations keep Q = 0 (the scoring rule's otherwise-branch pins them).
    """
    cur = tree[from_node_id].parent
    while cur is not None:
        node = tree[cur]
        if node.valid and node.children:
            best_child = max(tree[c].q_value for c in node.children)
            node.q_value = (1.0 - alpha) * node.q_value + alpha * best_child
        cur = node.parent


def _cr_of(coverage: CoverageMap, grid: GridMap) -> float:
    n_free, n_vis, _ = coverage_sets(coverage, grid)
    return n_vis / n_free if n_free else 0.0


def expand(
    tree: SearchTree,
    node_id: int,
    kind: ActionKind,
    backend,
    x: tuple[GridMap, CoverageMap, Instruction],
    seed: int = 0,
    start=None,
) -> int:
    """Apply one proposer action at a node; return the touched node's id.

    Trajectory actions attach a validated child (parse failures become
    children marked invalid); Evaluate caches compliance and verdict on the
    node itself and attaches nothing.
    """
    grid, coverage, instruction = x
    node = tree[node_id]
    if kind not in applicable_actions(tree, node_id):
        raise ApplicabilityError(f"action {kind.value} not applicable at node {node_id}")
    if start is None:
        start = grid.start

    if kind == ActionKind.EVALUATE:
        action = ProposerAction(kind, prior=node.trajectory)
        try:
            reply = backend.propose(action, grid, coverage, instruction, start, seed)
        except ParseError:
            return node_id  # leave the node unevaluated; a later draw may retry
        node.compliance = reply.compliance
        node.verdict = reply.verdict
        return node_id

    if kind == ActionKind.GENERATE:
        action = ProposerAction(kind)
    elif kind == ActionKind.REGENERATE:
        action = ProposerAction(kind, prior=node.trajectory, feedback=node.feedback)
    else:
        action = ProposerAction(kind, prior=node.trajectory)

    try:
        reply = backend.propose(action, grid, coverage, instruction, start, seed)
        traj = reply.trajectory if reply.trajectory is not None else Trajectory(())
        report = validate_path(grid, traj)
        valid = report.valid and len(traj) > 0
        feedback = None if valid else feedback_from_report(report)
    except ParseError:
        traj = Trajectory(())
        valid = False
        feedback = "Error: proposal could not be parsed."

    child = SearchNode(
        id=-1,
        trajectory=traj,
        parent=node_id,
        produced_by=kind,
        valid=valid,
        feedback=feedback,
    )
    if valid:
        child.sim_cr = _cr_of(apply_path(coverage, grid, traj), grid)
    else:
        child.sim_cr = _cr_of(coverage, grid)
    return tree.add(child)


def _candidate_score(
    tree: SearchTree,
    node_id: int,
    grid: GridMap,
    coverage: CoverageMap,
    config: MctsConfig,
) -> float:
    node = tree[node_id]
    compliance = node.compliance if node.compliance is not None else 0.0
    return score_node(node, grid, coverage, config.weights, compliance)


def run_search(
    x: tuple[GridMap, CoverageMap, Instruction],
    backend,
    config: MctsConfig = MctsConfig(),
    seed: int = 0,
    start=None,
    action_policy=None,
    progress=None,
) -> SearchResult:
    """Run the full search: root generation plus n_rollouts rollouts.

    action_policy(applicable, rng) -> ActionKind overrides the default
    seeded uniform draw (used by scripted tests). progress(rollout_index) is
    called as each rollout starts. With the heuristic backend and a fixed
    seed the result is bit-identical across runs.
    """
    grid, coverage, instruction = x
    if start is None:
        start = grid.start
    rng = random.Random(seed)
    tree = SearchTree()
    log: list[dict] = []
    error: str | None = None

    def record(rollout: int, kind: ActionKind, node: SearchNode) -> None:
        log.append(
            {
                "rollout": rollout,
                "action": kind.value,
                "node": node.id,
                "q": node.q_value,
                "valid": node.valid,
            }
        )

    # root: one Generate proposal seeds the tree
    try:
        reply = backend.propose(
            ProposerAction(ActionKind.GENERATE), grid, coverage, instruction, start, rng.getrandbits(32)
        )
        traj = reply.trajectory if reply.trajectory is not None else Trajectory(())
        report = validate_path(grid, traj)
        valid = report.valid and len(traj) > 0
        root = SearchNode(
            id=0,
            trajectory=traj,
            valid=valid,
            feedback=None if valid else feedback_from_report(report),
        )
    except ParseError:
        root = SearchNode(id=0, trajectory=Trajectory(()), valid=False,
                          feedback="Error: proposal could not be parsed.")
    except BackendUnavailableError as exc:
        empty = SearchTree()
        empty.add(SearchNode(id=0, trajectory=Trajectory(()), valid=False))
        return SearchResult([], None, 0.0, empty, [], error=str(exc))
    root.sim_cr = _cr_of(apply_path(coverage, grid, root.trajectory), grid) if root.valid else _cr_of(coverage, grid)
    tree.add(root)
    root.q_value = score_node(root, grid, coverage, config.weights, 0.0)
    record(0, ActionKind.GENERATE, root)

    def is_terminal(node_id: int, chain: list[int]) -> bool:
        node = tree[node_id]
        if len(chain) >= config.max_depth:
            return True
        if node.sim_cr >= config.terminal_cr:
            return True
        if node.verdict is False:
            return True
        return False

    candidates: list[tuple[int, int]] = []  # (rollout index, terminal node id)
    aborted = False
    for r in range(1, config.n_rollouts + 1):
        if aborted:
            break
        if progress is not None:
            progress(r)
        s = 0
        chain = [0]
        while True:
            if is_terminal(s, chain):
                break
            tree[s].visits += 1
            acts = applicable_actions(tree, s)
            kind = action_policy(acts, rng) if action_policy is not None else rng.choice(acts)
            try:
                touched = expand(tree, s, kind, backend, x, seed=rng.getrandbits(32), start=start)
            except BackendUnavailableError as exc:
                error = str(exc)
                aborted = True
                break
            node = tree[touched]
            compliance = node.compliance if node.compliance is not None else 0.0
            node.q_value = score_node(node, grid, coverage, config.weights, compliance)
            backpropagate(tree, touched, config.alpha)
            record(r, kind, node)
            if touched != s and chain[-1] != touched:
                chain.append(touched)
            kids = tree[s].children
            if kids:
                best_id = kids[0]
                best_u = uct_score(
                    tree[best_id].q_value, tree[best_id].visits, tree[s].visits,
                    config.omega, config.epsilon,
                )
                for cid in kids[1:]:
                    u = uct_score(
                        tree[cid].q_value, tree[cid].visits, tree[s].visits,
                        config.omega, config.epsilon,
                    )
                    if u > best_u:
                        best_id, best_u = cid, u
                if best_id != s:
                    s = best_id
                    if chain[-1] != s:
                        chain.append(s)
        candidates.append((r, chain[-1]))

    if not candidates:
        candidates = [(0, 0)]

    best_rollout, best_node = candidates[0]
    best_score = _candidate_score(tree, best_node, grid, coverage, config)
    for rollout, nid in candidates[1:]:
        sc = _candidate_score(tree, nid, grid, coverage, config)
        if sc > best_score:  # strict: ties keep the earliest rollout
            best_rollout, best_node, best_score = rollout, nid, sc

    return SearchResult(
        candidates=[tree[nid].trajectory for _, nid in candidates],
        best=tree[best_node].trajectory,
        best_q=best_score,
        tree=tree,
        rollout_log=log,
        candidate_node_ids=[nid for _, nid in candidates],
        best_node_id=best_node,
        error=error,
    )


def write_rollout_log(log: list[dict], path: str) -> None:
    """One line-delimited JSON record per expansion, for offline inspection."""
    with open(path, "w", encoding="utf-8") as f:
        for entry in log:
            json.dump(entry, f, ensure_ascii=False)
            f.write("\n")
