#!/usr/bin/env python3
"""Convert a MATPOWER .m case into the gridsense plain-text case format.

Usage: convert_matpower.py <case.m> <out.case> [--name NAME]

Only the columns the toolkit consumes are kept (see docs/case_format.md).
Out-of-service generators are dropped; out-of-service branches are kept
with status 0 so the parser can report them.
"""
import argparse
import re
import sys


def table(text, name):
    m = re.search(r"mpc\." + name + r"\s*=\s*\[(.*?)\];", text, re.S)
    if not m:
        sys.exit(f"missing mpc.{name}")
    rows = []
    for line in m.group(1).split("\n"):
        line = line.split("%")[0].strip().rstrip(";").strip()
        if line:
            rows.append(line.split())
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("src")
    ap.add_argument("dst")
    ap.add_argument("--name")
    args = ap.parse_args()
    text = open(args.src).read()
    base = re.search(r"mpc\.baseMVA\s*=\s*([0-9.eE+-]+)", text).group(1)
    bus, gen, branch = table(text, "bus"), table(text, "gen"), table(text, "branch")
    name = args.name or re.search(r"function\s+mpc\s*=\s*(\w+)", text).group(1)

    out = [f"# {name}: converted from MATPOWER data ({args.src.split('/')[-1]})",
           f"NAME {name}", f"BASEMVA {base}", "", "BUS",
           "# bus_i type Pd Qd Gs Bs Vm Va baseKV"]
    for r in bus:
        out.append(" ".join([r[0], r[1], r[2], r[3], r[4], r[5], r[7], r[8], r[9]]))
    out += ["", "GEN", "# bus Pg Qg Qmax Qmin Vg status Pmax Pmin"]
    for r in gen:
        if float(r[7]) <= 0:
            continue
        out.append(" ".join([r[0], r[1], r[2], r[3], r[4], r[5], r[7], r[8], r[9]]))
    out += ["", "BRANCH", "# fbus tbus r x b ratio angle status"]
    for r in branch:
        out.append(" ".join([r[0], r[1], r[2], r[3], r[4], r[8], r[9], r[10]]))
    with open(args.dst, "w") as f:
        f.write("\n".join(out) + "\n")


if __name__ == "__main__":
    main()
