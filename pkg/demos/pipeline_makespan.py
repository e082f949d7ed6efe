"""Epoch makespan of the 10-stage minibatch pipeline.

Per-batch costs come from a sampled access trace; the event simulation then
runs them serially and with several batches in flight, with and without a
feature cache.
"""
# %%
from dataclasses import replace

from vipkit.commsim import collect_trace, policy_rankings
from vipkit.graph import preferential_attachment, random_roles
from vipkit.partition import partition_graph
from vipkit.pipesim import ClusterConfig, costs_from_trace, simulate_pipeline
from vipkit.policies import build_cache
from vipkit.sampling import SeedSpec

g = preferential_attachment(3000, 6, seed=7)
roles = random_roles(g.num_vertices, train=0.1, seed=7)
part = partition_graph(g, roles, 4, seed=7)
fanouts, b, seeds = (5, 5, 5), 8, SeedSpec(1)
trace = collect_trace(g, roles, part, fanouts, b, 1, seeds)
plan = build_cache(policy_rankings("vip", g, roles, part, fanouts, b, seeds, trace), 0.2, g.num_vertices)

# a slow network and a fast sampler make communication the bottleneck
cfg = replace(ClusterConfig(K=4), net_bandwidth=2e7, sampler_throughput=5e4)

# %%
plain = costs_from_trace(trace, part)
cached = costs_from_trace(trace, part, plan=plan, gamma=0.1)
for name, costs, pipelined in [("serial", plain, False), ("pipelined", plain, True),
                               ("pipelined + cache", cached, True)]:
    r = simulate_pipeline(costs, cfg, pipelined=pipelined)
    busiest = max(r.utilization, key=r.utilization.get)
    print(f"{name:<18} makespan {r.makespan:8.4f} s   busiest {busiest} ({r.utilization[busiest]:.0%})")
