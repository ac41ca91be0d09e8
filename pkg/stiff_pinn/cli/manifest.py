"""Run manifests: what a command produced, from which config and seeds.

A manifest is a JSON file next to the artifacts. Every listed file carries
its SHA-256 digest; :func:`verify_manifest` re-checks existence, size,
digest and the format header of each one.
"""

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from ..common.io_utils import file_digest, get_artifact_kind

SVG_MARKERS = (b"<?xml", b"<svg")


@dataclass
class RunManifest:
    command: str
    version: str
    config: str
    seeds: Dict[str, int] = field(default_factory=dict)
    files: List[Dict[str, Any]] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)
    status: str = "ok"
    details: Dict[str, Any] = field(default_factory=dict)

    def add_file(self, file_path: str, base_dir: str) -> None:
        """Record ``file_path`` relative to ``base_dir`` with its digest."""
        path = Path(file_path)
        self.files.append({
            "path": os.path.relpath(path, base_dir),
            "kind": get_artifact_kind(str(path)),
            "bytes": path.stat().st_size,
            "sha256": file_digest(str(path)),
        })

    def write(self, file_path: str) -> None:
        Path(file_path).parent.mkdir(parents=True, exist_ok=True)
        with open(file_path, "w", encoding="utf-8") as f:
            json.dump(asdict(self), f, indent=2, sort_keys=False)
            f.write("\n")

    @classmethod
    def read(cls, file_path: str) -> "RunManifest":
        with open(file_path, encoding="utf-8") as f:
            data = json.load(f)
        return cls(**data)


def validate_output_file(file_path: str) -> Optional[str]:
    """Check the file exists, is non-empty and has a valid header.

    Returns an error message string on failure, or None on success.
    """
    if not os.path.exists(file_path):
        return f"Output file was not created: {file_path}"
    if os.path.getsize(file_path) == 0:
        return f"Output file is empty (0 bytes): {file_path}"

    kind = get_artifact_kind(file_path)
    try:
        with open(file_path, "rb") as f:
            head = f.read(256)
    except OSError:
        return f"Cannot read output file: {file_path}. Check file permissions."
    if kind == "table":
        first = head.split(b"\n", 1)[0].strip()
        if not first or first.startswith(b"#") or b"," not in first and not first.isalpha():
            return f"Output file is not a valid CSV table (missing header): {file_path}"
    if kind == "figure" and not any(marker in head for marker in SVG_MARKERS):
        return f"Output file is not a valid SVG: {file_path}"
    return None


def verify_manifest(manifest_path: str) -> List[str]:
    """All problems found with a manifest's files; empty when everything verifies."""
    manifest = RunManifest.read(manifest_path)
    base_dir = Path(manifest_path).parent
    problems = []
    for entry in manifest.files:
        file_path = str(base_dir / entry["path"])
        error = validate_output_file(file_path)
        if error is not None:
            problems.append(error)
            continue
        if file_digest(file_path) != entry["sha256"]:
            problems.append(f"Digest mismatch (file changed after the run): {file_path}")
    return problems
