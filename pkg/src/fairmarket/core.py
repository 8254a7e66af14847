"""Exact-rational primitives for fair division with indivisible goods.

Instances, allocations and price vectors, together with the spending
aggregates the solver reasons about: bundle prices, the price of a bundle
after dropping its most expensive good, minimum spenders, maximum
violators, and the price-level envy test built on them.  Also hosts the
normalization step that strips worthless goods and indifferent agents,
and the Hall-condition check that gates the solver.

Every quantity is a `fractions.Fraction`; nothing in the solver path ever
rounds.  Agent and good indices are 0-based throughout, including in the
JSON file formats.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence


class FairMarketError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(FairMarketError):
    """Malformed or out-of-contract input (bad file, bad index, bad shape)."""


class HallViolationError(FairMarketError):
    """The normalized instance has an agent set valuing fewer goods than its size."""


class InternalInvariantError(FairMarketError):
    """A solver invariant failed; indicates a bug, never a user error."""


# ---------------------------------------------------------------------------
# rational parsing / serialization


def parse_rational(value: int | str | Fraction) -> Fraction:
    """Parse an exact rational from an int, a Fraction, or a "p/q" string."""
    if isinstance(value, bool):
        raise InvalidInputError(f"expected a rational number, got {value!r}")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise InvalidInputError(f"cannot parse rational {value!r}: {exc}") from None
    raise InvalidInputError(f"expected an int or 'p/q' string, got {type(value).__name__}")


def rational_to_json(q: Fraction) -> int | str:
    """Canonical JSON form: plain int when integral, reduced "p/q" otherwise."""
    if q.denominator == 1:
        return q.numerator
    return f"{q.numerator}/{q.denominator}"


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class Instance:
    """A fair division instance: one valuation row per agent, one column per good."""

    valuations: tuple[tuple[Fraction, ...], ...]

    def __post_init__(self) -> None:
        if not self.valuations:
            raise InvalidInputError("an instance needs at least one agent")
        m = len(self.valuations[0])
        for i, row in enumerate(self.valuations):
            if len(row) != m:
                raise InvalidInputError(f"agent {i} has {len(row)} values, expected {m}")
            for g, v in enumerate(row):
                if not isinstance(v, Fraction):
                    raise InvalidInputError(f"valuation ({i},{g}) is not a Fraction")
                if v < 0:
                    raise InvalidInputError(f"valuation ({i},{g}) is negative: {v}")

    @property
    def n(self) -> int:
        return len(self.valuations)

    @property
    def m(self) -> int:
        return len(self.valuations[0])

    @classmethod
    def from_values(cls, rows: Iterable[Iterable[int | str | Fraction]]) -> "Instance":
        return cls(tuple(tuple(parse_rational(x) for x in row) for row in rows))

    def value_of(self, agent: int, goods: Iterable[int]) -> Fraction:
        """Additive value agent places on a set of goods."""
        row = self.valuations[agent]
        return sum((row[g] for g in goods), Fraction(0))

    def to_json_dict(self) -> dict:
        return {
            "agents": self.n,
            "goods": self.m,
            "valuations": [[rational_to_json(v) for v in row] for row in self.valuations],
        }

    @classmethod
    def from_json_dict(cls, obj: object) -> "Instance":
        if not isinstance(obj, dict):
            raise InvalidInputError("instance JSON must be an object")
        for key in ("agents", "goods", "valuations"):
            if key not in obj:
                raise InvalidInputError(f"instance JSON is missing {key!r}")
        rows = obj["valuations"]
        if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
            raise InvalidInputError("'valuations' must be a list of rows")
        inst = cls.from_values(rows)
        if inst.n != obj["agents"]:
            raise InvalidInputError(f"'agents' is {obj['agents']} but there are {inst.n} rows")
        if inst.m != obj["goods"]:
            raise InvalidInputError(f"'goods' is {obj['goods']} but rows have {inst.m} entries")
        return inst


@dataclass(frozen=True)
class Allocation:
    """A partition of the goods into one bundle per agent."""

    bundles: tuple[frozenset[int], ...]

    def __len__(self) -> int:
        return len(self.bundles)

    def __iter__(self):
        return iter(self.bundles)

    def __getitem__(self, agent: int) -> frozenset[int]:
        return self.bundles[agent]

    @classmethod
    def from_lists(cls, lists: Iterable[Iterable[int]]) -> "Allocation":
        return cls(tuple(frozenset(b) for b in lists))

    def validate_partition(self, m: int) -> None:
        """Raise unless the bundles are disjoint and cover exactly goods 0..m-1."""
        seen: set[int] = set()
        for i, bundle in enumerate(self.bundles):
            for g in bundle:
                if not isinstance(g, int) or isinstance(g, bool) or not 0 <= g < m:
                    raise InvalidInputError(f"bundle {i} holds invalid good index {g!r}")
                if g in seen:
                    raise InvalidInputError(f"good {g} appears in more than one bundle")
                seen.add(g)
        if len(seen) != m:
            missing = sorted(set(range(m)) - seen)
            raise InvalidInputError(f"goods {missing} are not allocated")

    def owner_map(self) -> dict[int, int]:
        return {g: i for i, bundle in enumerate(self.bundles) for g in bundle}

    def as_sorted_lists(self) -> list[list[int]]:
        return [sorted(b) for b in self.bundles]


@dataclass(frozen=True)
class Solution:
    """An allocation paired with a price vector over the same goods."""

    allocation: Allocation
    prices: tuple[Fraction, ...]

    def validate(self, inst: Instance) -> None:
        self.allocation.validate_partition(inst.m)
        if len(self.allocation) != inst.n:
            raise InvalidInputError(
                f"solution has {len(self.allocation)} bundles for {inst.n} agents"
            )
        if len(self.prices) != inst.m:
            raise InvalidInputError(f"price vector has {len(self.prices)} entries for {inst.m} goods")
        for g, p in enumerate(self.prices):
            if not isinstance(p, Fraction):
                raise InvalidInputError(f"price of good {g} is not a Fraction")
            if p < 0:
                raise InvalidInputError(f"price of good {g} is negative: {p}")

    def to_json_dict(self) -> dict:
        return {
            "bundles": self.allocation.as_sorted_lists(),
            "prices": [str(p) for p in self.prices],
        }

    @classmethod
    def from_json_dict(cls, obj: object) -> "Solution":
        if not isinstance(obj, dict):
            raise InvalidInputError("solution JSON must be an object")
        for key in ("bundles", "prices"):
            if key not in obj:
                raise InvalidInputError(f"solution JSON is missing {key!r}")
        bundles = obj["bundles"]
        if not isinstance(bundles, list) or not all(isinstance(b, list) for b in bundles):
            raise InvalidInputError("'bundles' must be a list of lists")
        prices = tuple(parse_rational(p) for p in obj["prices"])
        return cls(Allocation.from_lists(bundles), prices)


# ---------------------------------------------------------------------------
# price aggregates

Prices = Sequence[Fraction] | Mapping[int, Fraction]


def price_at(prices: Prices, g: int) -> Fraction:
    if not isinstance(g, int) or isinstance(g, bool) or g < 0:
        raise InvalidInputError(f"invalid good index {g!r}")
    try:
        return prices[g]
    except (IndexError, KeyError):
        raise InvalidInputError(f"good index {g} is outside the price vector") from None


def bundle_price(prices: Prices, goods: Iterable[int]) -> Fraction:
    """Total price of a set of goods; 0 for the empty set."""
    return sum((price_at(prices, g) for g in goods), Fraction(0))


def hat_price(prices: Prices, goods: Iterable[int]) -> Fraction:
    """Price of a set of goods after removing its most expensive one.

    Equals bundle_price minus the maximum price in the set; 0 for the
    empty set (and hence for singletons).
    """
    costs = [price_at(prices, g) for g in goods]
    if not costs:
        return Fraction(0)
    return sum(costs, Fraction(0)) - max(costs)


def spending_profile(bundles: Sequence[Iterable[int]], prices: Prices) -> list[Fraction]:
    return [bundle_price(prices, b) for b in bundles]


def hat_profile(bundles: Sequence[Iterable[int]], prices: Prices) -> list[Fraction]:
    return [hat_price(prices, b) for b in bundles]


def min_spenders(sol: Solution) -> tuple[int, ...]:
    """Agents with the lowest bundle price, in ascending index order."""
    spends = spending_profile(sol.allocation.bundles, sol.prices)
    low = min(spends)
    return tuple(i for i, s in enumerate(spends) if s == low)


def max_violators(sol: Solution) -> tuple[int, ...]:
    """Agents with the highest drop-one bundle price, in ascending index order."""
    hats = hat_profile(sol.allocation.bundles, sol.prices)
    high = max(hats)
    return tuple(i for i, h in enumerate(hats) if h == high)


def is_pef1(sol: Solution) -> bool:
    """Price-level envy-freeness up to one good.

    Holds exactly when the minimum spending is at least the maximum
    drop-one bundle price across all agents.
    """
    bundles = sol.allocation.bundles
    if not bundles:
        return True
    spends = spending_profile(bundles, sol.prices)
    hats = hat_profile(bundles, sol.prices)
    return min(spends) >= max(hats)


def is_pef1_except(sol: Solution, k: int) -> bool:
    """Like is_pef1 but the spending condition is waived for agent k."""
    bundles = sol.allocation.bundles
    if not 0 <= k < len(bundles):
        raise InvalidInputError(f"agent index {k} out of range")
    spends = spending_profile(bundles, sol.prices)
    hats = hat_profile(bundles, sol.prices)
    high = max(hats)
    return all(spends[i] >= high for i in range(len(bundles)) if i != k)


# ---------------------------------------------------------------------------
# normalization


@dataclass(frozen=True)
class NormalizationRecord:
    """Index bookkeeping between a raw instance and its normalized core.

    `kept_agents[i]` is the original index of core agent i, and likewise
    for goods; the record is enough to re-embed any core solution into the
    original index space.
    """

    original_agent_count: int
    original_good_count: int
    kept_agents: tuple[int, ...]
    kept_goods: tuple[int, ...]

    @property
    def dropped_agents(self) -> tuple[int, ...]:
        kept = set(self.kept_agents)
        return tuple(i for i in range(self.original_agent_count) if i not in kept)

    @property
    def dropped_goods(self) -> tuple[int, ...]:
        kept = set(self.kept_goods)
        return tuple(g for g in range(self.original_good_count) if g not in kept)

    @property
    def is_identity(self) -> bool:
        return len(self.kept_agents) == self.original_agent_count and len(
            self.kept_goods
        ) == self.original_good_count


def normalize_instance(inst: Instance) -> tuple[Instance | None, NormalizationRecord]:
    """Strip goods nobody values and agents who value nothing.

    Returns the core instance (or None when no agent survives) and the
    record needed to re-embed a core solution via `denormalize`.
    """
    kept_goods = tuple(
        g for g in range(inst.m) if any(inst.valuations[i][g] > 0 for i in range(inst.n))
    )
    kept_agents = tuple(
        i for i in range(inst.n) if any(v > 0 for v in inst.valuations[i])
    )
    rec = NormalizationRecord(inst.n, inst.m, kept_agents, kept_goods)
    if not kept_agents:
        return None, rec
    core = Instance(
        tuple(tuple(inst.valuations[i][g] for g in kept_goods) for i in kept_agents)
    )
    return core, rec


def denormalize(sol: Solution, rec: NormalizationRecord) -> Solution:
    """Re-embed a core solution into the original index space.

    Dropped agents receive empty bundles.  Dropped goods are appended to
    the bundle of the lowest-index surviving agent at price 0; they are
    worthless to every agent, so value-level fairness and efficiency are
    unaffected.
    """
    if len(sol.allocation) != len(rec.kept_agents):
        raise InvalidInputError("solution does not match the record's agent count")
    if len(sol.prices) != len(rec.kept_goods):
        raise InvalidInputError("solution does not match the record's good count")
    bundles: list[set[int]] = [set() for _ in range(rec.original_agent_count)]
    for ci, bundle in enumerate(sol.allocation):
        bundles[rec.kept_agents[ci]] = {rec.kept_goods[g] for g in bundle}
    dropped = rec.dropped_goods
    if dropped:
        # No surviving agent only happens when every good was dropped too;
        # park the worthless goods on agent 0 in that degenerate case.
        anchor = rec.kept_agents[0] if rec.kept_agents else 0
        bundles[anchor].update(dropped)
    prices = [Fraction(0)] * rec.original_good_count
    for ci, g in enumerate(rec.kept_goods):
        prices[g] = sol.prices[ci]
    return Solution(Allocation(tuple(frozenset(b) for b in bundles)), tuple(prices))


# ---------------------------------------------------------------------------
# Hall's condition


def check_hall(inst: Instance) -> bool:
    """True iff every agent can be matched to a distinct positively valued good.

    Uses augmenting-path maximum bipartite matching on the positive-value
    graph; a matching saturating all agents is equivalent to every agent
    subset valuing at least as many goods as its size.
    """
    adjacency = [
        [g for g in range(inst.m) if inst.valuations[i][g] > 0] for i in range(inst.n)
    ]
    matched_agent: dict[int, int] = {}

    def augment(i: int, visited: set[int]) -> bool:
        for g in adjacency[i]:
            if g in visited:
                continue
            visited.add(g)
            holder = matched_agent.get(g)
            if holder is None or augment(holder, visited):
                matched_agent[g] = i
                return True
        return False

    return all(augment(i, set()) for i in range(inst.n))
