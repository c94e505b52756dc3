"""Versioned prompt store: ``root/vNNNN/<parameter>.txt`` with front-matter headers."""

from __future__ import annotations

import re
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Union

from ltlprompt.autodiff import Parameter, format_parameter_file, load_parameter

_VERSION_DIR = re.compile(r"^v(\d{4,})$")


class StoreError(LookupError):
    pass


def version_dir(version: int) -> str:
    return f"v{version:04d}"


class PromptStore:
    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)

    def versions(self) -> List[int]:
        if not self.root.is_dir():
            return []
        out = []
        for p in self.root.iterdir():
            m = _VERSION_DIR.match(p.name)
            if m and p.is_dir():
                out.append(int(m.group(1)))
        return sorted(out)

    def latest(self) -> int:
        vs = self.versions()
        if not vs:
            raise StoreError(f"prompt store {self.root} has no versions")
        return vs[-1]

    def load(self, version: Optional[int] = None) -> Dict[str, Parameter]:
        """Parameters of one version (latest when ``version`` is None), keyed by id."""
        if not self.root.is_dir():
            raise StoreError(f"prompt store not found: {self.root}")
        v = self.latest() if version is None else version
        d = self.root / version_dir(v)
        if not d.is_dir():
            raise StoreError(f"unknown prompt version {v} in {self.root} (have {self.versions()})")
        params = {}
        for f in sorted(d.glob("*.txt")):
            p = load_parameter(f)
            params[p.id] = p
        if not params:
            raise StoreError(f"{d} holds no parameter files")
        return params

    def save(self, params: Mapping[str, Parameter], version: int) -> Path:
        d = self.root / version_dir(version)
        d.mkdir(parents=True, exist_ok=True)
        for pid in sorted(params):
            (d / f"{pid}.txt").write_text(format_parameter_file(params[pid]), encoding="utf-8")
        return d
