"""Shared collector for the acceptance suite's one-line-per-criterion report."""

LINES: list[str] = []


def record(number: int, status: str, detail: str) -> None:
    line = f"CRITERION {number:>2}: {status} - {detail}"
    LINES.append(line)
    print(line)
