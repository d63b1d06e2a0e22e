"""Print both photon-number routes for every point of a finished sweep."""

import argparse
import json
from pathlib import Path


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("run_dir", type=Path, help="output directory of a sweep (contains summary.json)")
    args = ap.parse_args()
    summary = json.loads((args.run_dir / "summary.json").read_text(encoding="utf-8"))
    print(f"{'U_l':>8} {'<a^dag a>':>14} {'4(U_l/d)S_x(pi)':>16} {'rel diff':>10}  label")
    for rec in summary["records"]:
        if rec["status"] != "ok":
            print(f"{rec['input']['U_l']:8.3f}  failed: {rec['error']}")
            continue
        a, b = rec["n_photon"], rec["n_photon_from_sx"]
        rel = abs(a - b) / max(abs(a), abs(b)) if max(abs(a), abs(b)) > 0 else 0.0
        print(f"{rec['input']['U_l']:8.3f} {a:14.8g} {b:16.8g} {rel:10.1e}  {rec['label']}")


if __name__ == "__main__":
    main()
