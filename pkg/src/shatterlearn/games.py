"""Multi-player binary games with every player running the experts learner.

Each player's strategy space is a finite action set; its induced function
class maps opponent profiles to the player's binary loss, and the loss
set is the dual of that class.  A player learns over the mixed extension
of its induced class: domain points are mesh distributions over loss-set
elements, and hypothesis values are expected losses rounded to the run's
dyadic grid (exact when the mesh resolution is a power of two).

Per round, every player announces a mixture over its actions; each player
then observes its exact expected-loss function, which is pushed forward
onto loss-set elements, snapped to the mesh, and fed to the player's
learner with label zero.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .core import FiniteHypothesisClass, MixedHypothesis, Rational, as_fraction
from .dimensions import dual_class, ldim
from .errors import CapacityError, InvariantError
from .experts import OseConfig, OseLearner
from .hpl import HplConfig


@dataclass(frozen=True)
class GameSpec:
    """K finite action sets and K binary payoff tensors (row-major flat)."""

    action_names: tuple  # per player, tuple of action name strings
    payoffs: tuple  # per player, flat tuple over the action-profile product

    def __post_init__(self):
        names = tuple(tuple(a) for a in self.action_names)
        object.__setattr__(self, "action_names", names)
        sizes = self.action_sizes
        total = 1
        for s in sizes:
            total *= s
        tensors = []
        for k, flat in enumerate(self.payoffs):
            flat = tuple(int(v) for v in flat)
            if len(flat) != total:
                raise ValueError(f"player {k} payoff tensor has wrong length")
            if any(v not in (0, 1) for v in flat):
                raise ValueError("payoffs must be binary")
            tensors.append(flat)
        object.__setattr__(self, "payoffs", tuple(tensors))

    @property
    def n_players(self) -> int:
        return len(self.action_names)

    @property
    def action_sizes(self) -> tuple:
        return tuple(len(a) for a in self.action_names)

    def loss(self, player: int, profile: Sequence[int]) -> int:
        flat = 0
        for size, a in zip(self.action_sizes, profile):
            flat = flat * size + a
        return self.payoffs[player][flat]

    def opponent_profiles(self, player: int) -> List[tuple]:
        ranges = [range(s) for i, s in enumerate(self.action_sizes) if i != player]
        return list(itertools.product(*ranges))

    def full_profile(self, player: int, action: int, opponents: tuple) -> tuple:
        profile = list(opponents)
        profile.insert(player, action)
        return tuple(profile)

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_players": self.n_players,
                "action_names": [list(a) for a in self.action_names],
                "payoffs": [list(p) for p in self.payoffs],
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "GameSpec":
        payload = json.loads(text)
        return cls(
            tuple(tuple(a) for a in payload["action_names"]),
            tuple(tuple(p) for p in payload["payoffs"]),
        )

    def save(self, path) -> None:
        with open(path, "w") as handle:
            handle.write(self.to_json())
            handle.write("\n")

    @classmethod
    def load(cls, path) -> "GameSpec":
        with open(path) as handle:
            return cls.from_json(handle.read())


def matching_pennies() -> GameSpec:
    return GameSpec(
        (("heads", "tails"), ("heads", "tails")),
        ((1, 0, 0, 1), (0, 1, 1, 0)),
    )


def asymmetric_2x3() -> GameSpec:
    """A 2x3 binary game without symmetric structure."""
    return GameSpec(
        (("up", "down"), ("left", "mid", "right")),
        ((1, 0, 1, 0, 1, 0), (0, 1, 0, 1, 1, 0)),
    )


# ---------------------------------------------------------------------------
# induced classes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InducedClasses:
    """Player view of a game: action class, its dual loss set, and maps."""

    player: int
    action_class: FiniteHypothesisClass  # rows: distinct action behaviors
    loss_set: FiniteHypothesisClass  # dual of the action class
    action_to_row: tuple  # action index -> row of action_class
    row_to_action: tuple  # row of action_class -> representative action
    point_class: FiniteHypothesisClass  # action rows over distinct loss-set columns
    profile_to_point: dict  # opponent profile -> point_class domain index


def induced_classes(game: GameSpec, player: int) -> InducedClasses:
    opp = game.opponent_profiles(player)
    domain = ["|".join(str(a) for a in prof) or "solo" for prof in opp]
    n_actions = game.action_sizes[player]
    raw_rows = [
        tuple(game.loss(player, game.full_profile(player, a, prof)) for prof in opp)
        for a in range(n_actions)
    ]
    distinct: List[tuple] = []
    action_to_row = []
    row_to_action = []
    for a, row in enumerate(raw_rows):
        if row in distinct:
            action_to_row.append(distinct.index(row))
        else:
            action_to_row.append(len(distinct))
            row_to_action.append(a)
            distinct.append(row)
    action_class = FiniteHypothesisClass(
        domain, distinct, 0, name=f"player{player}-actions"
    )
    loss_set = dual_class(action_class).with_name(f"player{player}-losses")

    # distinct loss-set columns: the points the mixed extension ranges over
    columns: List[tuple] = []
    profile_to_point = {}
    for j, prof in enumerate(opp):
        col = tuple(row[j] for row in distinct)
        if col in columns:
            profile_to_point[prof] = columns.index(col)
        else:
            profile_to_point[prof] = len(columns)
            columns.append(col)
    point_rows = [tuple(col[i] for col in columns) for i in range(len(distinct))]
    point_class = FiniteHypothesisClass(
        [f"L{i}" for i in range(len(columns))],
        point_rows,
        0,
        name=f"player{player}-points",
    )
    return InducedClasses(
        player,
        action_class,
        loss_set,
        tuple(action_to_row),
        tuple(row_to_action),
        point_class,
        profile_to_point,
    )


# ---------------------------------------------------------------------------
# the mixed-extension mesh class
# ---------------------------------------------------------------------------


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@dataclass(frozen=True)
class MixMeshClass:
    """Expected values of a binary class over mesh distributions."""

    base: FiniteHypothesisClass
    resolution: int
    cls: FiniteHypothesisClass
    mesh: tuple  # compositions aligned with cls.domain
    rounding_error: Fraction

    def mesh_index(self, composition: tuple) -> int:
        return self.mesh.index(composition)


def build_mix_mesh(
    base: FiniteHypothesisClass,
    resolution: int,
    grid_log2_denominator: int,
    mesh_cap: int = 512,
) -> MixMeshClass:
    if resolution < 1:
        raise ValueError("mesh resolution must be positive")
    mesh = list(_compositions(resolution, base.n_points))
    if len(mesh) > mesh_cap:
        raise CapacityError(f"{len(mesh)} mesh points exceed cap {mesh_cap}")
    step = Fraction(1, 1 << grid_log2_denominator)
    worst = Fraction(0)
    rows = []
    for row in base.hypotheses:
        out = []
        for comp in mesh:
            exact = sum(
                (Fraction(c) * v for c, v in zip(comp, row)), Fraction(0)
            ) / resolution
            lower = (exact // step) * step
            rounded = lower if exact - lower <= step / 2 else lower + step
            rounded = min(rounded, Fraction(1))
            worst = max(worst, abs(exact - rounded))
            out.append(rounded)
        rows.append(out)
    cls = FiniteHypothesisClass(
        [f"m{i}" for i in range(len(mesh))],
        rows,
        grid_log2_denominator,
        name=f"{base.name or 'class'}-mesh{resolution}",
    )
    if worst > step:
        raise InvariantError("mesh rounding exceeded one grid step")
    return MixMeshClass(base, resolution, cls, tuple(mesh), worst)


def snap_to_mesh(probabilities: Sequence[Fraction], resolution: int) -> tuple:
    """Largest-remainder apportionment of the resolution onto the atoms."""
    quotas = [as_fraction(p) * resolution for p in probabilities]
    counts = [int(q) for q in quotas]
    short = resolution - sum(counts)
    order = sorted(
        range(len(quotas)), key=lambda i: (quotas[i] - counts[i], -i), reverse=True
    )
    for i in order[:short]:
        counts[i] += 1
    return tuple(counts)


# ---------------------------------------------------------------------------
# player wiring
# ---------------------------------------------------------------------------


@dataclass
class GamePlayer:
    player: int
    induced: InducedClasses
    mesh: MixMeshClass
    learner: OseLearner
    action_distributions: List[dict] = field(default_factory=list)
    realized_losses: List[Fraction] = field(default_factory=list)
    loss_vectors: List[tuple] = field(default_factory=list)
    snap_errors: List[Fraction] = field(default_factory=list)

    def action_distribution(self, mixture: MixedHypothesis) -> dict:
        """Mixture over mesh-class rows -> distribution over actions."""
        dist: Dict[int, Fraction] = {}
        for i, w in mixture.support:
            action = self.induced.row_to_action[i]
            dist[action] = dist.get(action, Fraction(0)) + w
        return dist


def default_game_config(
    mesh_class: FiniteHypothesisClass,
    horizon: int,
    expert_rounds: int = 4,
    eta: Optional[Rational] = None,
    measured_dim: Optional[int] = None,
) -> OseConfig:
    """Desk-scale learner constants for a game player.

    The default step size follows dim / horizon^(1/4) in spirit but is
    snapped to a dyadic value in (0, 1/4]; pass ``eta`` to override.
    The inner proper-learner ladder runs on the mesh class's declared
    grid, with a small confidence divisor so its accuracy constraints
    actually bind at this depth (out-of-regime constants; runs are
    labeled accordingly).
    """
    grid = mesh_class.grid_log2_denominator
    if eta is None:
        dim = measured_dim if measured_dim is not None else 1
        target = float(max(dim, 1)) / max(horizon, 2) ** 0.25
        k = 2
        while Fraction(1, 1 << k) > target and k < 6:
            k += 1
        eta = Fraction(1, 1 << k)
    eta = as_fraction(eta)
    hpl = HplConfig.default(
        grid,
        mixture_levels=max(1, grid - 2),
        indicator_levels=max(1, grid - 1),
        highvote_divisor=1 if grid == 1 else 2,
        m_cap=64,
    )
    return OseConfig(
        alpha=Fraction(1, 1 << grid),
        eta_oh=eta,
        eta_psr=eta,
        horizon=horizon,
        hpl=hpl,
        expert_rounds=expert_rounds,
        check_invariants=False,
        hpl_max_rebuilds=4,
    )


def make_player(
    game: GameSpec,
    player: int,
    resolution: int,
    horizon: int,
    config: Optional[OseConfig] = None,
    expert_rounds: int = 4,
    eta: Optional[Rational] = None,
    ladder_depth: int = 4,
) -> GamePlayer:
    """The learner's grid is deepened to ``ladder_depth`` beyond the mesh
    grain so the inner accuracy constraints bind below the value spacing."""
    induced = induced_classes(game, player)
    grid = resolution.bit_length() - 1
    if 1 << grid != resolution:
        raise ValueError("mesh resolution must be a power of two")
    fine = max(grid, ladder_depth)
    mesh = build_mix_mesh(induced.point_class, resolution, fine)
    if config is None:
        config = default_game_config(
            mesh.cls, horizon, expert_rounds=expert_rounds, eta=eta
        )
    learner = OseLearner(mesh.cls, config, mode="lazy")
    return GamePlayer(player, induced, mesh, learner)


@dataclass
class GameTrace:
    game: GameSpec
    resolution: int
    horizon: int
    players: List[GamePlayer]
    loss_stability: List[Fraction] = field(default_factory=list)
    out_of_regime: bool = True

    def regret(self, player: int) -> Fraction:
        return regret(self, player)


def regret(trace: GameTrace, player: int) -> Fraction:
    """Realized expected loss minus the best fixed action in hindsight."""
    p = trace.players[player]
    realized = sum(p.realized_losses, Fraction(0))
    n_actions = trace.game.action_sizes[player]
    best = min(
        sum((vec[a] for vec in p.loss_vectors), Fraction(0))
        for a in range(n_actions)
    )
    return realized - best


def play_game(
    game: GameSpec,
    horizon: int,
    resolution: int = 4,
    configs: Optional[Sequence[Optional[OseConfig]]] = None,
    expert_rounds: int = 4,
    eta: Optional[Rational] = None,
    opening_moves: Optional[Sequence[Sequence[int]]] = None,
) -> GameTrace:
    """Self-play: every player runs the experts learner; exact bookkeeping.

    ``opening_moves`` optionally forces the first rounds to fixed pure
    action profiles (one profile per forced round).  Exact self-play from
    a symmetric start can sit on an equilibrium from round 0 (zero
    gradient everywhere); a deterministic off-equilibrium opening makes
    convergence measurable.  The learners themselves are untouched: they
    observe the same features either way, and forced rounds are charged
    to the players' own loss accounts.
    """
    players = []
    for k in range(game.n_players):
        config = configs[k] if configs is not None else None
        players.append(
            make_player(game, k, resolution, horizon, config, expert_rounds, eta)
        )
    trace = GameTrace(game, resolution, horizon, players)
    trace.out_of_regime = any(p.learner.out_of_regime for p in players)

    opening = [tuple(int(a) for a in prof) for prof in opening_moves or ()]
    prev_loss_vectors: List[Optional[tuple]] = [None] * game.n_players
    for t in range(horizon):
        mixtures = [p.learner.announce() for p in players]
        dists = [p.action_distribution(m) for p, m in zip(players, mixtures)]
        if t < len(opening):
            dists = [{a: Fraction(1)} for a in opening[t]]
        for p in players:
            p.action_distributions.append(dists[p.player])

        round_stability = Fraction(0)
        for k, p in enumerate(players):
            opp = game.opponent_profiles(k)
            opp_probs = []
            for prof in opp:
                prob = Fraction(1)
                others = [j for j in range(game.n_players) if j != k]
                for j, a in zip(others, prof):
                    prob *= dists[j].get(a, Fraction(0))
                opp_probs.append(prob)

            # exact per-action expected loss
            n_actions = game.action_sizes[k]
            loss_vec = []
            for a in range(n_actions):
                total = Fraction(0)
                for prof, prob in zip(opp, opp_probs):
                    if prob:
                        total += prob * game.loss(k, game.full_profile(k, a, prof))
                loss_vec.append(total)
            loss_vec = tuple(loss_vec)
            p.loss_vectors.append(loss_vec)
            realized = sum(
                (dists[k].get(a, Fraction(0)) * loss_vec[a] for a in range(n_actions)),
                Fraction(0),
            )
            p.realized_losses.append(realized)

            if prev_loss_vectors[k] is not None:
                drift = max(
                    abs(a - b) for a, b in zip(loss_vec, prev_loss_vectors[k])
                )
                round_stability = max(round_stability, drift)
            prev_loss_vectors[k] = loss_vec

            # push opponents' joint onto loss-set points, snap to the mesh
            point_probs = [Fraction(0)] * p.induced.point_class.n_points
            for prof, prob in zip(opp, opp_probs):
                point_probs[p.induced.profile_to_point[prof]] += prob
            counts = snap_to_mesh(point_probs, resolution)
            snap_err = sum(
                (abs(Fraction(c, resolution) - q) for c, q in zip(counts, point_probs)),
                Fraction(0),
            )
            p.snap_errors.append(snap_err)
            mesh_id = p.mesh.cls.domain[p.mesh.mesh_index(counts)]
            p.learner.observe(mesh_id, 0)
        if t > 0:
            trace.loss_stability.append(round_stability)
    return trace


def loss_stability_bound(configs: Sequence[OseConfig], n_players: int) -> Fraction:
    """Per-round opponent-driven drift bound: sum of the other players'
    announcement stability."""
    per_player = [c.stability_bound() for c in configs]
    return max(
        sum((per_player[j] for j in range(n_players) if j != k), Fraction(0))
        for k in range(n_players)
    )


# ---------------------------------------------------------------------------
# drift-violating baseline
# ---------------------------------------------------------------------------


def adversarial_baseline(
    game: GameSpec,
    player: int,
    horizon: int,
    resolution: int = 4,
    config: Optional[OseConfig] = None,
    expert_rounds: int = 4,
    eta: Optional[Rational] = None,
) -> Tuple[Fraction, List[Fraction]]:
    """The player's learner against a greedy loss-maximizing adversary that
    jumps between pure opponent behaviors (maximal drift).  Returns
    (regret, per-round realized losses)."""
    p = make_player(game, player, resolution, horizon, config, expert_rounds, eta)
    n_actions = game.action_sizes[player]
    point_cls = p.induced.point_class
    pure_columns = [
        tuple(point_cls.hypotheses[p.induced.action_to_row[a]][j] for a in range(n_actions))
        for j in range(point_cls.n_points)
    ]
    realized_losses: List[Fraction] = []
    chosen: List[int] = []
    for t in range(horizon):
        mixture = p.learner.announce()
        dist = p.action_distribution(mixture)
        best = None
        for j, col in enumerate(pure_columns):
            loss = sum(
                (dist.get(a, Fraction(0)) * col[a] for a in range(n_actions)),
                Fraction(0),
            )
            if best is None or loss > best[0]:
                best = (loss, j)
        loss, j = best
        realized_losses.append(loss)
        chosen.append(j)
        counts = tuple(
            resolution if i == j else 0 for i in range(point_cls.n_points)
        )
        mesh_id = p.mesh.cls.domain[p.mesh.mesh_index(counts)]
        p.learner.observe(mesh_id, 0)
    best_fixed = min(
        sum((pure_columns[j][a] for j in chosen), Fraction(0))
        for a in range(n_actions)
    )
    return sum(realized_losses, Fraction(0)) - best_fixed, realized_losses
