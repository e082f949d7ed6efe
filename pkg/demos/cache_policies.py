"""Remote-feature traffic under different cache rankings.

Every policy ranks the remote vertices of each partition, the top
``alpha * n / K`` of them are replicated locally, and one shared set of
sampled epochs is replayed against each cache.
"""
# %%
from vipkit.commsim import sweep
from vipkit.graph import preferential_attachment, random_roles
from vipkit.partition import partition_graph
from vipkit.policies import POLICIES
from vipkit.sampling import SeedSpec

g = preferential_attachment(3000, 6, seed=7)
roles = random_roles(g.num_vertices, train=0.1, valid=0.05, test=0.05, seed=7)
part = partition_graph(g, roles, 4, seed=7)
alphas = [0.0, 0.05, 0.1, 0.2]

# %%
res = sweep(g, roles, part, [(5, 5, 5)], b=4, E=5, alphas=alphas, policies=POLICIES, seeds=SeedSpec(1))

# %% average remote misses per epoch, then improvement over no cache
print("policy  " + "".join(f"a={a:<10g}" for a in alphas))
for p in POLICIES:
    print(f"{p:<8}" + "".join(f"{res.get(p, a, (5, 5, 5)).avg_misses:<12.1f}" for a in alphas))
print()
for p in POLICIES:
    print(f"{p:<8}" + "".join(f"{res.geomean_improvement(p, a):<12.3f}" for a in alphas[1:]))
