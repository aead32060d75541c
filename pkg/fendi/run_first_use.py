"""FENDI
Fidelity-aware ENtanglement DIstribution

This Python script is meant to be run before first use,
it ensures that the Just-In-Time compiler has done its job.
The level kernels of the layered program are compiled and
cached on the first call, which makes the first run slower.
"""

import os
import fendi


# get the path to the bundled topologies
script_dir = os.path.dirname(os.path.abspath(__file__))  # absolute dir the script is in
data_dir = os.path.join(script_dir, 'data')
file = os.path.join(data_dir, 'staircase.json')
# execute the code
net = fendi.nw.load_topology(file)
solution = fendi.fp.fendi(net, 'A', 'B', delta=2.0, eps=0.5)
plan = fendi.sim.derive_plan(solution.layered, net)
report = fendi.sim.run(net, plan, fendi.sim.SimConfig(slots=10, seed=1))
print(f'worst-case fidelity: {solution.worst_fidelity:.6f}, delivered {report.delivered} ebits in 10 slots')
