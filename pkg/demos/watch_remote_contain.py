"""Follow one ReMOTE run step by step.

A botnet behind the gateway floods links that serve a hidden target.  Each
time a link floods, the defender splits the routing tree below it and moves
one half onto a different path.  Watch the suspect set shrink until the
penalty ledger settles on a single node.

    python demos/watch_remote_contain.py [seed]
"""
import sys

from crossfire_te.sim import desk_scenario, simulate

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
cfg = desk_scenario("1", "remote", seed=seed)
res = simulate(cfg)

print(f"topology {cfg.topology_path}, {cfg.host_count} hosts, seed {seed}")
print(f"{'t':>3} {'phase':>15} {'suspects':>8} {'common':>6} {'changes':>7} {'max util':>8}  note")
for s in res.steps:
    note = "fallback" if s.fallback else ""
    print(f"{s.timestep:>3} {s.phase or '-':>15} {s.suspects if s.suspects is not None else '-':>8} "
          f"{s.common_dst:>6} {s.changes:>7} {100 * s.max_util:>7.1f}%  {note}")

m = res.metrics
if m.verdict:
    print(f"\ndeduced target {m.verdict['deduced_target']}, "
          f"{len(m.verdict['bots'])} hosts flagged as bots")
print(f"bot detection {m.bot_detect_rate_pct:.1f}%, false positives {m.false_positive_pct:.2f}%, "
      f"{m.modifications_per_node:.1f} table entries changed per node")
