"""Small labelled corpus of generated PE files for end-to-end runs."""
from datetime import datetime, timezone

import numpy as np

from build_fixtures import build_pe

BENIGN_IMPORTS = [("KERNEL32.dll", "ExitProcess"), ("KERNEL32.dll", "GetStdHandle"),
                  ("USER32.dll", "MessageBoxA"), ("GDI32.dll", "TextOutA"),
                  ("COMCTL32.dll", "InitCommonControls")]
MALWARE_IMPORTS = [("KERNEL32.dll", "VirtualAllocEx"), ("KERNEL32.dll", "WriteProcessMemory"),
                   ("KERNEL32.dll", "CreateRemoteThread"), ("ADVAPI32.dll", "RegSetValueExA"),
                   ("WININET.dll", "InternetOpenUrlA")]
BENIGN_WORDS = [b"Copyright Example Corp", b"Settings dialog", b"Open file..."]
MALWARE_WORDS = [b"cmd.exe /c del", b"http://203.0.113.9/gate.php", b"SOFTWARE\\Microsoft\\Run"]


def _ts(year, month=6, day=1):
    return int(datetime(year, month, day, tzinfo=timezone.utc).timestamp())


def make_corpus(root, n_per_class=20, seed=0, discarded=4, pre_2000=2):
    """Write PE files plus ``votes.csv`` under ``root``; return the votes path.

    Malware and benign files draw imports and strings from disjoint pools,
    so a classifier separates them easily. Compile years are spread across
    the time-split boundary; ``pre_2000`` files per class are dated 1998.
    """
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    lines = ["file_id,alarms,engines,compile_timestamp"]
    specs = []
    for cls in ("benign", "malware"):
        for i in range(n_per_class):
            year = 1998 if i < pre_2000 else (2005 + i % 9 if i % 2 else 2014 + i % 2)
            specs.append((cls, i, year))
    for i in range(discarded):
        specs.append(("discarded", i, 2010))

    for cls, i, year in specs:
        pool = MALWARE_IMPORTS if cls == "malware" else BENIGN_IMPORTS
        words = MALWARE_WORDS if cls == "malware" else BENIGN_WORDS
        k = int(rng.integers(2, len(pool) + 1))
        imports = [pool[j] for j in sorted(rng.choice(len(pool), k, replace=False))]
        text = b"\x00".join(words[j] for j in rng.permutation(len(words)))
        text += rng.integers(0, 256, int(rng.integers(16, 200)), dtype=np.uint8).tobytes()
        ts = _ts(year, 8 if year == 2014 else 6)
        name = f"{cls}_{i:03d}.exe"
        (root / name).write_bytes(build_pe(ts, imports, text=text[:0x200]))
        alarms, engines = {"benign": (0, 50), "malware": (30 + i % 20, 55), "discarded": (5, 55)}[cls]
        lines.append(f"{name},{alarms},{engines},{ts}")
    votes = root.parent / f"{root.name}_votes.csv"
    votes.write_text("\n".join(lines) + "\n")
    return votes
