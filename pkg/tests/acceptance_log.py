"""Collects one verdict line per acceptance criterion for the terminal summary."""

LINES = {}


def record(number, ok, detail):
    key = str(number)
    line = f"criterion {key:<3} {'PASS' if ok else 'FAIL'}  {detail}"
    LINES[key] = line
    print(line)
    return ok


def ordered():
    return [LINES[k] for k in sorted(LINES, key=lambda k: (int(k.rstrip("abcd")), k))]
