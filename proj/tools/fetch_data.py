"""Write benchmark tables as CSV with a `label` column.

bc comes from the copy bundled with scikit-learn. The UCI tables are
downloaded from archive.ics.uci.edu; spambase and magic fall back to the
raw copies shipped in the keel-ds package when the download fails (the
KEEL spambase drops 4 duplicate rows).

usage: python3 tools/fetch_data.py {bc,banknote,spambase,magic} [--out PATH]
"""

import argparse
import csv
import io
import pathlib
import sys
import urllib.request

UCI = "https://archive.ics.uci.edu/ml/machine-learning-databases/"
SOURCES = {
    "banknote": UCI + "00267/data_banknote_authentication.txt",
    "spambase": UCI + "spambase/spambase.data",
    "magic": UCI + "magic/magic04.data",
}
DEFAULT_OUT = {
    "bc": "data/breast_cancer.csv",
    "banknote": "data/banknote.csv",
    "spambase": "data/spambase.csv",
    "magic": "data/magic.csv",
}


def breast_cancer():
    from sklearn.datasets import load_breast_cancer

    ds = load_breast_cancer()
    names = [n.replace(" ", "_") for n in ds.feature_names]
    rows = [[repr(float(v)) for v in x] + [int(y)] for x, y in zip(ds.data, ds.target)]
    return names, rows


def download(name):
    try:
        with urllib.request.urlopen(SOURCES[name], timeout=60) as resp:
            return resp.read().decode()
    except OSError:
        if name not in ("spambase", "magic"):
            raise
        try:
            from importlib.resources import files
            raw = files("keel_ds") / "data" / "balanced" / "raw" / f"{name}.dat"
            return raw.read_text()
        except ModuleNotFoundError:
            raise OSError("no network and keel-ds is not installed") from None


def uci(name):
    text = download(name)
    rows = [[v.strip() for v in r] for r in csv.reader(io.StringIO(text)) if r]
    width = len(rows[0]) - 1
    names = [f"x{i + 1}" for i in range(width)]
    if name == "magic":
        # last column is g (gamma, signal) or h (hadron, background)
        rows = [r[:-1] + [1 if r[-1] == "g" else 0] for r in rows]
    else:
        rows = [r[:-1] + [int(float(r[-1]))] for r in rows]
    return names, rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("dataset", choices=sorted(DEFAULT_OUT))
    ap.add_argument("--out", type=pathlib.Path)
    args = ap.parse_args()
    out = args.out or pathlib.Path(DEFAULT_OUT[args.dataset])
    try:
        names, rows = breast_cancer() if args.dataset == "bc" else uci(args.dataset)
    except OSError as exc:
        sys.exit(f"could not fetch {args.dataset}: {exc}")
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + ["label"])
        w.writerows(rows)
    print(f"wrote {len(rows)} rows to {out}")


if __name__ == "__main__":
    main()
