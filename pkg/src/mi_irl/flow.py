"""Min-cost flow by successive shortest paths, for small real-capacity networks.

Used to solve the GEVD transportation problem exactly: supply ``a`` on one
side, demand ``b`` on the other, linear pairing costs in between.
"""

from __future__ import annotations

import numpy as np

from .errors import ConvergenceError, ValidationError

# residual capacities below this count as saturated
EPS = 1e-12


class FlowNetwork:
    def __init__(self, num_nodes):
        self.n = num_nodes
        self.to, self.cap, self.cost, self.adj = [], [], [], [[] for _ in range(num_nodes)]

    def add_edge(self, u, v, cap, cost):
        """Add ``u -> v`` plus its residual twin; returns the forward edge id."""
        eid = len(self.to)
        for a, b, c, w in ((u, v, cap, cost), (v, u, 0.0, -cost)):
            self.adj[a].append(len(self.to))
            self.to.append(b)
            self.cap.append(float(c))
            self.cost.append(float(w))
        return eid

    def flow_on(self, eid):
        return self.cap[eid ^ 1]

    def _shortest_path(self, source):
        # Bellman-Ford: residual costs can be negative. Ties keep the lowest node index.
        dist = [np.inf] * self.n
        prev = [-1] * self.n
        dist[source] = 0.0
        for _ in range(self.n - 1):
            changed = False
            for u in range(self.n):
                if dist[u] == np.inf:
                    continue
                for e in self.adj[u]:
                    nd = dist[u] + self.cost[e]
                    # strict improvement beyond rounding, so prev never closes a zero-cost cycle
                    if self.cap[e] > EPS and nd < dist[self.to[e]] - 1e-12 * (1.0 + abs(nd)):
                        dist[self.to[e]] = nd
                        prev[self.to[e]] = e
                        changed = True
            if not changed:
                break
        return dist, prev

    def min_cost_flow(self, source, sink, amount, tol=1e-10, max_augments=None):
        """Push ``amount`` units from ``source`` to ``sink`` at minimum cost.

        Returns ``(flow_sent, total_cost)``.
        """
        if max_augments is None:
            max_augments = 4 * len(self.to) ** 2
        sent, total = 0.0, 0.0
        for _ in range(max_augments):
            if amount - sent <= tol:
                break
            dist, prev = self._shortest_path(source)
            if dist[sink] == np.inf:
                break
            push, v, path = amount - sent, sink, []
            while v != source:
                e = prev[v]
                path.append(e)
                if len(path) > self.n:
                    raise ConvergenceError("cycle in shortest-path tree", amount - sent, len(path))
                push = min(push, self.cap[e])
                v = self.to[e ^ 1]
            if push <= EPS:
                break
            for e in path:
                self.cap[e] -= push
                self.cap[e ^ 1] += push
            sent += push
            total += push * dist[sink]
        else:
            if amount - sent > tol:
                raise ConvergenceError("min-cost flow did not finish", amount - sent, max_augments)
        return sent, total


def transport(supply, demand, cost):
    """Optimal coupling ``w`` with row sums ``supply`` and column sums ``demand``.

    Network: source -> row i (capacity supply_i, cost 0), row i -> column j
    (unit capacity, cost ``cost[i, j]``), column j -> sink (capacity
    demand_j, cost 0), one unit of flow. Returns ``(w, total_cost)``.
    """
    a = np.asarray(supply, dtype=float)
    b = np.asarray(demand, dtype=float)
    C = np.asarray(cost, dtype=float)
    if C.shape != (a.size, b.size):
        raise ValidationError(f"cost shape {C.shape} does not match marginals ({a.size}, {b.size})")
    if np.any(a < 0) or np.any(b < 0) or abs(a.sum() - b.sum()) > 1e-9:
        raise ValidationError("marginals must be non-negative with equal totals")
    m, n = C.shape
    net = FlowNetwork(m + n + 2)
    source, sink = m + n, m + n + 1
    for i in range(m):
        net.add_edge(source, i, a[i], 0.0)
    inner = [[net.add_edge(i, m + j, 1.0, C[i, j]) for j in range(n)] for i in range(m)]
    for j in range(n):
        net.add_edge(m + j, sink, b[j], 0.0)
    sent, _ = net.min_cost_flow(source, sink, min(a.sum(), b.sum()))
    w = np.array([[net.flow_on(inner[i][j]) for j in range(n)] for i in range(m)])
    w[w < 0] = 0.0
    return w, float((w * C).sum())
