"""Tour of the reverse-mode engine that everything else is built on.

Builds a small expression graph, runs backward, and cross-checks one
gradient against central finite differences.
"""

import numpy as np

from metaprior import graph

print("== building a graph ==")
x = graph.leaf([[0.5, -1.0], [2.0, 0.3]])
w = graph.leaf([[0.7], [-0.2]])
h = graph.tanh(graph.matmul(x, w))
loss = graph.add(graph.tsum(graph.square(h)), graph.logsumexp(graph.reshape(h, (2,))))
print("loss value:", float(loss.value))

graph.backward(loss)
print("d loss / d w:\n", w.grad)

print("\n== finite-difference check ==")
def loss_at(wv):
    hh = graph.tanh(graph.matmul(graph.const(x.value), graph.const(wv)))
    return float(graph.add(graph.tsum(graph.square(hh)),
                           graph.logsumexp(graph.reshape(hh, (2,)))).value)

h_step = 1e-6
fd = np.zeros_like(w.value)
for i in range(2):
    up, dn = w.value.copy(), w.value.copy()
    up[i, 0] += h_step
    dn[i, 0] -= h_step
    fd[i, 0] = (loss_at(up) - loss_at(dn)) / (2 * h_step)
print("finite differences:\n", fd)
print("max abs difference:", np.abs(fd - w.grad).max())

print("\n== Adam on f(x) = x^2 ==")
p = graph.leaf([5.0])
opt = graph.Adam([p], lr=0.05)
for step in range(1000):
    opt.zero_grad()
    graph.backward(graph.tsum(graph.square(p)))
    opt.step()
print("after 1000 steps from 5.0:", p.value[0])
