"""Shared file utilities: numeric CSV tables, artifact kinds and digests."""

import hashlib
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

# Artifact kind by file extension, used by the manifest and its verifier
ARTIFACT_KINDS = {
    ".csv": "table",
    ".svg": "figure",
    ".txt": "checkpoint",
    ".mech": "mechanism",
    ".ini": "config",
    ".json": "manifest",
}

REAL_FORMAT = "%.17g"


def get_artifact_kind(file_path: str) -> str:
    """Get the artifact kind for a file based on extension."""
    return ARTIFACT_KINDS.get(Path(file_path).suffix.lower(), "data")


def format_real(value: float) -> str:
    return REAL_FORMAT % value


def file_digest(file_path: str) -> str:
    """SHA-256 hex digest of a file's bytes."""
    digest = hashlib.sha256()
    with open(file_path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def ensure_parent(file_path: str) -> None:
    output_dir = Path(file_path).parent
    if output_dir and not output_dir.exists():
        output_dir.mkdir(parents=True, exist_ok=True)


def write_table(
    file_path: str,
    columns: Sequence[str],
    rows: np.ndarray,
    trailer: Optional[Sequence[str]] = None,
) -> None:
    """Write a header line plus rows of reals at 17 significant digits.

    ``trailer`` lines are appended as ``# ...`` comments.
    """
    ensure_parent(file_path)
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.size == 0:
        rows = rows.reshape(0, len(columns))
    with open(file_path, "w", encoding="utf-8", newline="\n") as f:
        np.savetxt(f, rows, delimiter=",", fmt=REAL_FORMAT, header=",".join(columns), comments="")
        for line in trailer or ():
            f.write(f"# {line}\n")


def read_table(file_path: str) -> Tuple[List[str], np.ndarray, List[str]]:
    """Read a table written by :func:`write_table`.

    Returns:
        ``(columns, rows, trailer)`` where ``trailer`` holds the comment lines.

    Raises:
        ValueError: If the header is missing or a row has the wrong width.
    """
    path = Path(file_path)
    if not path.exists():
        raise FileNotFoundError(f"Table not found: {file_path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    body = [line for line in lines if line.strip() and not line.startswith("#")]
    trailer = [line[1:].strip() for line in lines if line.startswith("#")]
    if not body:
        raise ValueError(f"Malformed CSV (no header): {file_path}")
    columns = [c.strip() for c in body[0].split(",")]
    data = []
    for number, line in enumerate(body[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(columns):
            raise ValueError(
                f"Malformed CSV {file_path}: row {number} has {len(cells)} cells, "
                f"header has {len(columns)}"
            )
        try:
            data.append([float(c) for c in cells])
        except ValueError:
            raise ValueError(f"Malformed CSV {file_path}: non-numeric cell in row {number}") from None
    rows = np.array(data, dtype=float).reshape(len(data), len(columns))
    return columns, rows, trailer
