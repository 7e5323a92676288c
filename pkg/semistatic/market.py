"""Finite scenario-tree market model."""

import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .config import DEFAULT_CONFIG
from .errors import (
    ArbitrageError,
    DimensionMismatchError,
    MarketSpecError,
    ProbabilitySumError,
)
from .lp_core import strict_feasibility
from .utils import as_vector, deserialize, serialize


logger = logging.getLogger(__name__)

PROBABILITY_TOLERANCE = 1e-12


@dataclass(frozen=True)
class TreeNode:
    """Node of a scenario tree."""
    id: str
    parent: Optional[str]
    time: int
    cond_prob: float


class ScenarioTree:
    """Filtration as an explicit event tree.

    Terminal nodes are the states of the world, ordered as they appear in
    the node list.
    """

    def __init__(self, nodes: Sequence[TreeNode], horizon: int):
        self.nodes: Tuple[TreeNode, ...] = tuple(nodes)
        self.horizon = horizon
        self.by_id: Dict[str, TreeNode] = {}
        self.children: Dict[str, List[str]] = {}
        self._validate()

    def _validate(self):
        if not isinstance(self.horizon, int) or self.horizon < 1:
            raise MarketSpecError(f"must be an integer >= 1, got {self.horizon!r}", 'horizon')
        if not self.nodes:
            raise MarketSpecError("tree has no nodes", 'nodes')

        for node in self.nodes:
            if node.id in self.by_id:
                raise MarketSpecError(f"duplicate node id {node.id!r}", 'nodes')
            self.by_id[node.id] = node
            self.children[node.id] = []

        roots = [node for node in self.nodes if node.parent is None]
        if len(roots) != 1:
            raise MarketSpecError(f"expected exactly one root, found {len(roots)}", 'nodes')
        if roots[0].time != 0:
            raise MarketSpecError("root must have time 0", 'nodes.time')
        self.root = roots[0].id

        for node in self.nodes:
            if node.parent is None:
                continue
            parent = self.by_id.get(node.parent)
            if parent is None:
                raise MarketSpecError(f"node {node.id!r} has unknown parent {node.parent!r}", 'nodes.parent')
            if node.time != parent.time + 1:
                raise MarketSpecError(f"node {node.id!r} must have time {parent.time + 1}", 'nodes.time')
            self.children[parent.id].append(node.id)

        for node in self.nodes:
            kids = self.children[node.id]
            if not kids:
                if node.time != self.horizon:
                    raise MarketSpecError(
                        f"terminal node {node.id!r} has time {node.time}, expected {self.horizon}",
                        'nodes.time',
                    )
                continue
            probs = [self.by_id[k].cond_prob for k in kids]
            if any(not (prob > 0.0) for prob in probs):
                raise MarketSpecError(f"children of {node.id!r} need positive probabilities", 'nodes.cond_prob')
            total = math.fsum(probs)
            if abs(total - 1.0) > PROBABILITY_TOLERANCE:
                raise ProbabilitySumError(
                    f"branch probabilities at {node.id!r} sum to {total!r}", 'nodes.cond_prob'
                )

    @cached_property
    def terminal_ids(self) -> List[str]:
        return [node.id for node in self.nodes if not self.children[node.id]]

    @cached_property
    def trading_ids(self) -> List[str]:
        """Non-terminal nodes, where holdings are chosen."""
        return [node.id for node in self.nodes if self.children[node.id]]

    def path(self, node_id: str) -> List[str]:
        """Node ids from the root down to ``node_id``."""
        path = [node_id]
        while self.by_id[path[-1]].parent is not None:
            path.append(self.by_id[path[-1]].parent)
        return path[::-1]

    @cached_property
    def path_probabilities(self) -> np.ndarray:
        probs = []
        for leaf in self.terminal_ids:
            probs.append(math.prod(self.by_id[n].cond_prob for n in self.path(leaf)[1:]))
        return np.array(probs)


@dataclass(frozen=True)
class StockProcess:
    """Stock prices at every node."""
    prices: Mapping[str, np.ndarray]
    num_stocks: int

    @classmethod
    def from_lists(cls, prices: Mapping[str, Sequence[float]]) -> 'StockProcess':
        arrays = {node: np.asarray(values, dtype=float).reshape(-1) for node, values in prices.items()}
        sizes = {arr.shape[0] for arr in arrays.values()}
        if len(sizes) > 1:
            raise MarketSpecError("every node needs the same number of stock prices", 'nodes.stock')
        for node, arr in arrays.items():
            if not np.all(np.isfinite(arr)):
                raise MarketSpecError(f"non-finite stock price at node {node!r}", 'nodes.stock')
        return cls(arrays, sizes.pop() if sizes else 0)


@dataclass(frozen=True)
class DerivativeBasket:
    """Static claims, each a payoff per terminal node."""
    names: Tuple[str, ...] = ()
    payoffs: Tuple[Mapping[str, float], ...] = ()

    def __len__(self) -> int:
        return len(self.names)


@dataclass(frozen=True, eq=False)
class MarketModel:
    """Scenario tree, stocks and derivatives; checked for no arbitrage on construction."""
    tree: ScenarioTree
    stocks: StockProcess
    derivatives: DerivativeBasket = field(default_factory=DerivativeBasket)
    name: str = ''

    def __post_init__(self):
        missing = [n.id for n in self.tree.nodes if n.id not in self.stocks.prices]
        if missing:
            raise MarketSpecError(f"no stock prices for nodes {missing}", 'nodes.stock')
        terminals = set(self.tree.terminal_ids)
        for name, payoff in zip(self.derivatives.names, self.derivatives.payoffs):
            if set(payoff) != terminals:
                raise MarketSpecError(
                    f"payoff of {name!r} must cover exactly the terminal nodes", 'derivatives.payoff'
                )
            if not all(math.isfinite(v) for v in payoff.values()):
                raise MarketSpecError(f"payoff of {name!r} is not finite", 'derivatives.payoff')

        A_eq, b_eq = self.martingale_system()
        result = strict_feasibility(A_eq, b_eq)
        if not result.strictly_positive(DEFAULT_CONFIG.interior_threshold):
            raise ArbitrageError(
                f"Market {self.name or '<unnamed>'} admits no equivalent martingale measure"
            )
        object.__setattr__(self, 'equivalent_measure', result.witness)
        logger.debug("Loaded market %s: %d states, %d stocks, %d derivatives",
                     self.name, self.num_states, self.num_stocks, self.num_derivatives)

    @property
    def states(self) -> List[str]:
        return self.tree.terminal_ids

    @property
    def num_states(self) -> int:
        return len(self.tree.terminal_ids)

    @property
    def num_stocks(self) -> int:
        return self.stocks.num_stocks

    @property
    def num_derivatives(self) -> int:
        return len(self.derivatives)

    @property
    def horizon(self) -> int:
        return self.tree.horizon

    @cached_property
    def P(self) -> np.ndarray:
        return self.tree.path_probabilities

    @cached_property
    def strategy_slots(self) -> List[Tuple[str, int]]:
        """(node, stock) pairs indexing the columns of ``G``."""
        return [(node, i) for node in self.tree.trading_ids for i in range(self.num_stocks)]

    @cached_property
    def G(self) -> np.ndarray:
        """Gains matrix: wealth change per unit holding of each slot, per state."""
        column = {slot: k for k, slot in enumerate(self.strategy_slots)}
        G = np.zeros((self.num_states, len(self.strategy_slots)))
        prices = self.stocks.prices
        for w, leaf in enumerate(self.tree.terminal_ids):
            path = self.tree.path(leaf)
            for node, child in zip(path[:-1], path[1:]):
                delta = prices[child] - prices[node]
                for i in range(self.num_stocks):
                    G[w, column[(node, i)]] = delta[i]
        return G

    @cached_property
    def F(self) -> np.ndarray:
        """Derivative payoffs, one row per claim."""
        rows = [[payoff[leaf] for leaf in self.tree.terminal_ids] for payoff in self.derivatives.payoffs]
        return np.array(rows, dtype=float).reshape(self.num_derivatives, self.num_states)

    def martingale_system(self) -> Tuple[np.ndarray, np.ndarray]:
        """Equalities for terminal measures Q making every stock a martingale."""
        A_eq = np.vstack([np.ones((1, self.num_states)), self.G.T])
        b_eq = np.zeros(A_eq.shape[0])
        b_eq[0] = 1.0
        return A_eq, b_eq

    def expectation(self, values: np.ndarray) -> float:
        return float(self.P @ values)


@dataclass
class TradingStrategy:
    """Holdings per non-terminal node, applied over its outgoing edges."""
    holdings: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zero(cls, model: MarketModel) -> 'TradingStrategy':
        return cls({node: np.zeros(model.num_stocks) for node in model.tree.trading_ids})

    @classmethod
    def constant(cls, model: MarketModel, amount: Union[float, Sequence[float]]) -> 'TradingStrategy':
        vec = np.broadcast_to(np.asarray(amount, dtype=float), (model.num_stocks,))
        return cls({node: vec.copy() for node in model.tree.trading_ids})

    @classmethod
    def from_vector(cls, model: MarketModel, vector: np.ndarray) -> 'TradingStrategy':
        vector = as_vector(vector, len(model.strategy_slots), 'strategy')
        holdings = {node: np.zeros(model.num_stocks) for node in model.tree.trading_ids}
        for value, (node, i) in zip(vector, model.strategy_slots):
            holdings[node][i] = value
        return cls(holdings)

    def as_vector(self, model: MarketModel) -> np.ndarray:
        vector = np.zeros(len(model.strategy_slots))
        for k, (node, i) in enumerate(model.strategy_slots):
            held = self.holdings.get(node)
            if held is not None:
                held = as_vector(held, model.num_stocks, f'holdings[{node}]')
                vector[k] = held[i]
        if not np.all(np.isfinite(vector)):
            raise ValueError("Trading strategy must be finite")
        return vector


@dataclass
class TerminalWealth:
    """Wealth per terminal node."""
    values: np.ndarray
    states: List[str]

    def as_dict(self) -> Dict[str, float]:
        return {state: float(v) for state, v in zip(self.states, self.values)}


def terminal_wealth(model: MarketModel, x0: float, H: TradingStrategy) -> TerminalWealth:
    """x0 plus the gains of H along each path."""
    values = float(x0) + model.G @ H.as_vector(model)
    return TerminalWealth(values, list(model.states))


def combined_payoff(model: MarketModel, x0: float, H: TradingStrategy,
                    q: Sequence[float], p: Sequence[float]) -> TerminalWealth:
    """Terminal wealth after buying q derivatives at prices p."""
    q = as_vector(q, model.num_derivatives, 'q')
    p = as_vector(p, model.num_derivatives, 'p')
    wealth = terminal_wealth(model, x0 - float(q @ p), H)
    wealth.values = wealth.values + model.F.T @ q
    return wealth


def _require(data: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in data:
        raise MarketSpecError("missing required field", f"{where}.{key}" if where else key)
    return data[key]


def _number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MarketSpecError(f"expected a number, got {value!r}", where)
    return float(value)


def market_from_dict(data: Mapping[str, Any], name: str = '') -> MarketModel:
    """Build a market from the parsed spec format."""
    if not isinstance(data, Mapping):
        raise MarketSpecError("market spec must be an object", '')
    horizon = _require(data, 'horizon', '')
    if isinstance(horizon, bool) or not isinstance(horizon, int):
        raise MarketSpecError(f"must be an integer, got {horizon!r}", 'horizon')
    raw_nodes = _require(data, 'nodes', '')
    if not isinstance(raw_nodes, list):
        raise MarketSpecError("must be a list", 'nodes')

    nodes: List[TreeNode] = []
    prices: Dict[str, List[float]] = {}
    for k, raw in enumerate(raw_nodes):
        where = f"nodes[{k}]"
        if not isinstance(raw, Mapping):
            raise MarketSpecError("must be an object", where)
        node_id = str(_require(raw, 'id', where))
        parent = raw.get('parent')
        time = _require(raw, 'time', where)
        if isinstance(time, bool) or not isinstance(time, int):
            raise MarketSpecError(f"must be an integer, got {time!r}", f"{where}.time")
        cond_prob = _number(raw.get('cond_prob', 1.0), f"{where}.cond_prob")
        stock = raw.get('stock', [])
        if not isinstance(stock, list):
            raise MarketSpecError("must be a list of prices", f"{where}.stock")
        prices[node_id] = [_number(v, f"{where}.stock") for v in stock]
        nodes.append(TreeNode(node_id, None if parent is None else str(parent), time, cond_prob))

    tree = ScenarioTree(nodes, horizon)
    stocks = StockProcess.from_lists(prices)

    names, payoffs = [], []
    raw_derivs = data.get('derivatives', [])
    if not isinstance(raw_derivs, list):
        raise MarketSpecError("must be a list", 'derivatives')
    for k, raw in enumerate(raw_derivs):
        where = f"derivatives[{k}]"
        if not isinstance(raw, Mapping):
            raise MarketSpecError("must be an object", where)
        payoff = _require(raw, 'payoff', where)
        if not isinstance(payoff, Mapping):
            raise MarketSpecError("must map terminal node ids to values", f"{where}.payoff")
        names.append(str(raw.get('name', f'claim{k + 1}')))
        payoffs.append({str(node): _number(v, f"{where}.payoff") for node, v in payoff.items()})

    return MarketModel(tree, stocks, DerivativeBasket(tuple(names), tuple(payoffs)),
                       name=str(data.get('name', name)))


def load_market(spec: Union[bytes, str]) -> MarketModel:
    """Parse a JSON or msgpack market spec."""
    if isinstance(spec, bytes):
        stripped = spec.lstrip()
        if stripped[:1] in (b'{', b'['):
            text = stripped.decode('utf-8')
        else:
            try:
                return market_from_dict(deserialize(spec))
            except MarketSpecError:
                raise
            except Exception as e:
                raise MarketSpecError(f"cannot decode market spec: {e}") from e
    else:
        text = spec
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise MarketSpecError(f"invalid JSON: {e}") from e
    return market_from_dict(data)


def market_to_dict(model: MarketModel) -> Dict[str, Any]:
    nodes = []
    for node in model.tree.nodes:
        nodes.append({
            'id': node.id,
            'parent': node.parent,
            'time': node.time,
            'cond_prob': node.cond_prob,
            'stock': model.stocks.prices[node.id].tolist(),
        })
    derivatives = [{'name': name, 'payoff': dict(payoff)}
                   for name, payoff in zip(model.derivatives.names, model.derivatives.payoffs)]
    return {'name': model.name, 'horizon': model.horizon, 'nodes': nodes, 'derivatives': derivatives}


def dump_market(model: MarketModel, fmt: str = 'json') -> bytes:
    data = market_to_dict(model)
    if fmt == 'json':
        return json.dumps(data, indent=2).encode('utf-8')
    if fmt == 'msgpack':
        return serialize(data)
    raise ValueError(f"Unknown market format: {fmt}")


def one_period_market(returns: Sequence[float], probs: Sequence[float],
                      payoffs: Optional[Mapping[str, Sequence[float]]] = None,
                      s0: float = 1.0, name: str = '') -> MarketModel:
    """Single-period market with one stock (or none when ``returns`` is empty)."""
    probs = list(probs)
    nodes = [{'id': 'root', 'parent': None, 'time': 0, 'cond_prob': 1.0,
              'stock': [s0] if returns else []}]
    for k, prob in enumerate(probs):
        nodes.append({'id': f's{k}', 'parent': 'root', 'time': 1, 'cond_prob': prob,
                      'stock': [s0 * returns[k]] if returns else []})
    derivatives = [{'name': claim, 'payoff': {f's{k}': float(v) for k, v in enumerate(values)}}
                   for claim, values in (payoffs or {}).items()]
    return market_from_dict({'horizon': 1, 'nodes': nodes, 'derivatives': derivatives}, name=name)


def instance_a() -> MarketModel:
    """One period, S: 1 -> {2, 1, 1/2}, uniform P, call with strike 1."""
    return one_period_market([2.0, 1.0, 0.5], [1 / 3, 1 / 3, 1 / 3],
                             {'call': [1.0, 0.0, 0.0]}, name='instance-a')


def nonconvex_example_market() -> MarketModel:
    """No stocks; one claim paying +1 with probability 2/3 and -1 otherwise."""
    return one_period_market([], [2 / 3, 1 / 3], {'f': [1.0, -1.0]}, name='s10')


def binomial_market(steps: int, up: float = 2.0, down: float = 0.5, s0: float = 1.0,
                    p_up: float = 0.5, strike: Optional[float] = 1.0) -> MarketModel:
    """Non-recombining binomial tree, optionally with a European call."""
    nodes = [{'id': 'r', 'parent': None, 'time': 0, 'cond_prob': 1.0, 'stock': [s0]}]
    frontier = [('r', s0)]
    for t in range(1, steps + 1):
        nxt = []
        for node_id, price in frontier:
            for tag, factor, prob in (('u', up, p_up), ('d', down, 1.0 - p_up)):
                child = node_id + tag
                nodes.append({'id': child, 'parent': node_id, 'time': t,
                              'cond_prob': prob, 'stock': [price * factor]})
                nxt.append((child, price * factor))
        frontier = nxt
    derivatives = []
    if strike is not None:
        derivatives.append({'name': 'call',
                            'payoff': {node_id: max(price - strike, 0.0) for node_id, price in frontier}})
    return market_from_dict({'horizon': steps, 'nodes': nodes, 'derivatives': derivatives},
                            name=f'binomial-{steps}')


def random_tiny_market(rng: np.random.Generator, states: int = 3) -> MarketModel:
    """Random one-period market with one stock and one claim, free of arbitrage."""
    if states < 2:
        raise ValueError("Need at least two states for a non-degenerate stock")
    while True:
        returns = np.sort(rng.uniform(0.5, 1.6, size=states))[::-1]
        if returns[0] > 1.05 and returns[-1] < 0.95:
            break
    probs = rng.dirichlet(np.full(states, 2.0))
    probs = np.maximum(probs, 0.05)
    probs = probs / probs.sum()
    probs[-1] = 1.0 - math.fsum(probs[:-1])
    payoff = np.round(rng.uniform(-1.0, 1.0, size=states), 3)
    return one_period_market(returns.tolist(), probs.tolist(), {'claim': payoff.tolist()},
                             name='random')


BUILTIN_MARKETS = {
    'instance-a': instance_a,
    's10': nonconvex_example_market,
}


def resolve_market(source: str) -> MarketModel:
    """Built-in market by name, otherwise a JSON/msgpack file path."""
    if source in BUILTIN_MARKETS:
        return BUILTIN_MARKETS[source]()
    path = Path(source)
    if not path.exists():
        raise MarketSpecError(f"no built-in market or file named {source!r}", 'market')
    return load_market(path.read_bytes())
