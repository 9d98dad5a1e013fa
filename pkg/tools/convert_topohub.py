"""Convert Topology Zoo networks shipped in the ``topohub`` wheel to GraphML.

The output follows the Topology Zoo GraphML schema (node ``label``,
``Latitude``, ``Longitude``; graph ``Network``) so that it round-trips through
:func:`crossfire_te.topology.load_graphml` exactly like an original zoo file.

    pip download topohub --no-deps -d /tmp/th
    python tools/convert_topohub.py /tmp/th/topohub-*.whl Abilene AttMpls Geant2012 Xspedius
    python tools/convert_topohub.py --out /tmp/zoo /tmp/th/topohub-*.whl Cogentco
"""
import json
import sys
import zipfile
from pathlib import Path

import networkx as nx

OUT = Path(__file__).resolve().parents[1] / "src" / "crossfire_te" / "data"


def convert(wheel, name, out=OUT):
    with zipfile.ZipFile(wheel) as z:
        raw = json.loads(z.read(f"topohub/data/topozoo/{name}.json"))
    g = nx.MultiGraph() if raw.get("multigraph") else nx.Graph()
    g.graph["Network"] = name
    g.graph["Source"] = "Internet Topology Zoo via topohub"
    for node in raw["nodes"]:
        lon, lat = node["pos"]
        g.add_node(str(node["id"]), label=str(node.get("name", node["id"])),
                   Latitude=float(lat), Longitude=float(lon))
    for edge in raw["edges"]:
        g.add_edge(str(edge["source"]), str(edge["target"]))
    nx.write_graphml(g, Path(out) / f"{name}.graphml")
    return g


if __name__ == "__main__":
    args = sys.argv[1:]
    out = OUT
    if args[:1] == ["--out"]:
        out, args = Path(args[1]), args[2:]
        out.mkdir(parents=True, exist_ok=True)
    wheel, *names = args
    for name in names:
        g = convert(wheel, name, out)
        print(f"{name}: {g.number_of_nodes()} nodes, {g.number_of_edges()} edges")
