#!/usr/bin/env python3
"""Rewrite the golden files from the current generators.

Run after an intentional output change, then review the diff like any
other code change:

    python3 scripts/regen_goldens.py
"""

from __future__ import annotations

import sys
from pathlib import Path

TESTS_DIR = Path(__file__).resolve().parent.parent / "tests"
sys.path.insert(0, str(TESTS_DIR))

from golden_cases import CASES  # noqa: E402


def main() -> int:
    golden_dir = TESTS_DIR / "goldens"
    golden_dir.mkdir(exist_ok=True)
    for name, produce in CASES.items():
        path = golden_dir / name
        text = produce()
        changed = not path.exists() or path.read_text(encoding="utf-8") != text
        path.write_text(text, encoding="utf-8")
        print(f"{'updated' if changed else 'unchanged'}  {path.relative_to(TESTS_DIR.parent)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
