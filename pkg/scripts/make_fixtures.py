"""Regenerate the golden fixture files under tests/fixtures.

Only needed when the on-disk formats change on purpose.
"""

import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from test_sidechain import golden_chain  # noqa: E402
from podt.trust import TrustLedger  # noqa: E402


def main():
    out = ROOT / "tests" / "fixtures"
    out.mkdir(exist_ok=True)
    sc = golden_chain()
    sc.save(out / "sidechain_golden.bin")
    sc.export_jsonl(out / "sidechain_golden.jsonl")
    (out / "sidechain_golden.sha256").write_text(sc.head_hash().hex() + "\n")

    led = TrustLedger(3, 2)
    led.tru[:] = np.array([[3, 0], [0, 0], [5, 2]])
    led.fal[:] = np.array([[1, 4], [0, 0], [0, 1]])
    led.to_csv(out / "ledger_golden.csv")
    print(f"wrote fixtures to {out}")


if __name__ == "__main__":
    main()
