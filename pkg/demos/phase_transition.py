"""Identifiability of Erdos-Renyi graphs as the edge probability grows.

Below about log(N)/N a random graph has isolated vertices and cannot be
identified from the eigenspaces alone; above it almost every graph can.
"""
import math

from eigensupport.experiments import phase_study

n = 40
rep = phase_study(n, multipliers=(0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0), trials=100, seed=0)
for p, freq, _ in rep.rows():
    c = p * n / math.log(n)
    print(f"p = {c:4.2f} log(N)/N   identifiable in {100 * freq:5.1f}% of graphs  " + "#" * round(40 * freq))
