"""Vertex reordering so that a GPU-resident id prefix holds the hot vertices.

Ids are made contiguous per partition and sorted by descending inclusion
probability inside each partition; the first ``gamma`` fraction of each
partition then sits on the GPU and only the rest crosses PCIe.
"""
# %%
import numpy as np

from vipkit.commsim import collect_trace, h2d_volume
from vipkit.graph import preferential_attachment, random_roles
from vipkit.partition import partition_graph
from vipkit.reorder import apply_reorder, build_reorder
from vipkit.sampling import SeedSpec
from vipkit.vip import partition_vip

g = preferential_attachment(3000, 6, seed=3)
roles = random_roles(g.num_vertices, train=0.1, seed=3)
part = partition_graph(g, roles, 2, seed=3)
fanouts, b = (10, 5), 4

vip = [partition_vip(g, roles, part, k, b, fanouts).total for k in range(part.K)]
rmap = build_reorder(part, vip)
g2, roles2, part2 = apply_reorder(g, roles, part, rmap)
print("partition 0 now owns ids", part2.members[0][[0, -1]], " partition 1 owns", part2.members[1][[0, -1]])

# %% host-to-device transfers per epoch, identity vs inclusion order
trace = collect_trace(g, roles, part, fanouts, b, 3, SeedSpec(1))
rng = np.random.default_rng(0)
for gamma in (0.0, 0.1, 0.3):
    ident = h2d_volume(g, part, 0, part.members[0], gamma, trace).mean()
    rand = h2d_volume(g, part, 0, rng.permutation(part.members[0]), gamma, trace).mean()
    ours = h2d_volume(g, part, 0, rmap.local_order(0), gamma, trace).mean()
    print(f"gamma={gamma:.1f}  identity {ident:8.1f}  random {rand:8.1f}  inclusion order {ours:8.1f}")
