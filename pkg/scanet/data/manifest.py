from dataclasses import dataclass, field
import json
from pathlib import Path
from typing import Dict, List, Optional, Union

from ..errors import ArgumentError, FormatError
from .study import PatientStudy, load_study


@dataclass
class ManifestEntry:
    path: str
    id: str
    label: int


@dataclass
class CohortManifest:
    seed: int
    params: Dict
    studies: List[ManifestEntry] = field(default_factory=list)
    root: Optional[Path] = None

    def validate(self) -> "CohortManifest":
        ids = [entry.id for entry in self.studies]
        if len(set(ids)) != len(ids):
            raise ArgumentError("manifest study ids are not unique")
        bad = [entry.id for entry in self.studies if entry.label not in (0, 1)]
        if bad:
            raise ArgumentError(f"manifest labels must be 0 or 1 (offending ids: {bad[:5]})")
        return self

    def class_counts(self) -> Dict[int, int]:
        return {label: sum(entry.label == label for entry in self.studies) for label in (0, 1)}

    def resolve(self, entry: ManifestEntry) -> Path:
        path = Path(entry.path)
        return path if path.is_absolute() or self.root is None else self.root / path

    def to_dict(self) -> Dict:
        return {
            "seed": self.seed,
            "params": self.params,
            "studies": [{"path": e.path, "id": e.id, "label": e.label} for e in self.studies],
        }


def write_manifest(path: Union[str, Path], manifest: CohortManifest):
    manifest.validate()
    Path(path).write_text(json.dumps(manifest.to_dict(), indent=2) + "\n")


def load_manifest(path: Union[str, Path]) -> CohortManifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
        entries = [ManifestEntry(path=s["path"], id=s["id"], label=int(s["label"])) for s in raw["studies"]]
        manifest = CohortManifest(seed=raw.get("seed", 0), params=raw.get("params", {}), studies=entries,
                                  root=path.parent)
    except json.JSONDecodeError as e:
        raise FormatError(f"manifest {path} is not valid JSON: {e.msg}", offset=e.pos) from e
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"manifest {path} is missing or has malformed fields: {e}") from e
    return manifest.validate()


def load_cohort(manifest: CohortManifest) -> List[PatientStudy]:
    """Load every study; ids and labels come from the manifest and must agree with the files."""
    studies = []
    for entry in manifest.studies:
        study = load_study(manifest.resolve(entry), study_id=entry.id)
        if study.label != entry.label:
            raise FormatError(f"study {entry.id}: file label {study.label} disagrees with manifest {entry.label}",
                              offset=20)
        studies.append(study)
    return studies
