"""Corpus ingestion: scan a directory tree of parallel whisper/normal WAV
recordings into a manifest of records, pairs, and a train/test split.

Filename stems encode identity as ``<speaker>_<style>_<utterance>`` by
default; the regex is configurable because corpus layouts vary. The site
(US/SG) is taken from a ``site`` regex group or any US/SG path segment,
defaulting to US. Manifests persist as line-delimited JSON, one record per
line, so they diff and stream cleanly.
"""

from __future__ import annotations

import json
import random
import re
import wave
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .config import CorpusConfig

STYLES = ("whisper", "normal")
SITES = ("US", "SG")
_STYLE_SYNONYMS = {
    "whisper": "whisper",
    "whispered": "whisper",
    "w": "whisper",
    "normal": "normal",
    "n": "normal",
}


class CorpusError(RuntimeError):
    """Fatal corpus problem (missing root, malformed manifest)."""


class SpeakerNotFoundError(KeyError):
    """Requested speaker has no records in the manifest."""


@dataclass
class UtteranceRecord:
    speaker_id: str
    utterance_id: str
    style: str  # 'whisper' | 'normal'
    site: str  # 'US' | 'SG'
    audio_path: str
    duration_s: float

    def validate(self) -> "UtteranceRecord":
        if self.style not in STYLES:
            raise CorpusError(f"invalid style {self.style!r} for {self.audio_path}")
        if self.site not in SITES:
            raise CorpusError(f"invalid site {self.site!r} for {self.audio_path}")
        if self.duration_s <= 0:
            raise CorpusError(f"non-positive duration for {self.audio_path}")
        return self


@dataclass
class UtterancePair:
    speaker_id: str
    utterance_id: str
    whisper: UtteranceRecord
    normal: UtteranceRecord


@dataclass
class CorpusManifest:
    records: list[UtteranceRecord] = field(default_factory=list)
    pairs: list[UtterancePair] = field(default_factory=list)
    split: dict[str, str] = field(default_factory=dict)  # utterance_id -> train/test

    def speakers(self) -> list[str]:
        return sorted({r.speaker_id for r in self.records})

    def records_for(self, speaker_id: str, style: Optional[str] = None) -> list[UtteranceRecord]:
        return [
            r
            for r in self.records
            if r.speaker_id == speaker_id and (style is None or r.style == style)
        ]


@dataclass
class IngestReport:
    scanned: int = 0
    ingested: int = 0
    errors: list[str] = field(default_factory=list)  # per-file problems, never dropped silently
    skipped: list[str] = field(default_factory=list)  # unmatched names, filtered sites

    def lines(self) -> list[str]:
        out = [f"scanned {self.scanned} files, ingested {self.ingested}"]
        out += [f"error: {e}" for e in self.errors]
        out += [f"skipped: {s}" for s in self.skipped]
        return out


def _wav_duration(path: Path) -> float:
    with wave.open(str(path), "rb") as wf:
        rate = wf.getframerate()
        if rate <= 0:
            raise ValueError("invalid frame rate")
        return wf.getnframes() / rate


def _site_from_path(rel: Path) -> Optional[str]:
    for part in rel.parts[:-1]:
        if part.upper() in SITES:
            return part.upper()
    return None


def ingest(
    root: str | Path,
    cfg: Optional[CorpusConfig] = None,
    site_filter: Optional[str] = "unset",
) -> tuple[CorpusManifest, IngestReport]:
    """Scan `root` for WAV files and build a manifest, one record per file.

    Unparseable or zero-length files land in the report, never silently
    dropped. `site_filter` defaults to the config's value.
    """
    cfg = cfg or CorpusConfig()
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"corpus root does not exist: {root}")
    site_filter = cfg.site_filter if site_filter == "unset" else site_filter
    pattern = re.compile(cfg.stem_regex)

    report = IngestReport()
    records = []
    for path in sorted(root.rglob("*.wav")):
        report.scanned += 1
        rel = path.relative_to(root)
        m = pattern.match(path.stem)
        if not m:
            report.skipped.append(f"{rel}: stem does not match the filename pattern")
            continue
        groups = m.groupdict()
        style = _STYLE_SYNONYMS.get(groups.get("style", "").lower())
        if style is None:
            report.skipped.append(f"{rel}: unknown style {groups.get('style')!r}")
            continue
        site = (groups.get("site") or _site_from_path(rel) or "US").upper()
        if site not in SITES:
            report.skipped.append(f"{rel}: unknown site {site!r}")
            continue
        if site_filter is not None and site != site_filter.upper():
            report.skipped.append(f"{rel}: filtered out (site {site})")
            continue
        try:
            duration = _wav_duration(path)
        except Exception as exc:
            report.errors.append(f"{rel}: unreadable WAV ({exc})")
            continue
        if duration <= 0:
            report.errors.append(f"{rel}: zero-length audio")
            continue
        records.append(
            UtteranceRecord(
                speaker_id=groups["speaker"],
                utterance_id=groups["utterance"],
                style=style,
                site=site,
                audio_path=str(path),
                duration_s=duration,
            ).validate()
        )
    report.ingested = len(records)
    manifest, _ = pair_utterances(CorpusManifest(records=records))
    return manifest, report


def pair_utterances(manifest: CorpusManifest) -> tuple[CorpusManifest, list[UtteranceRecord]]:
    """Match whisper/normal records by (speaker, utterance).

    Returns the manifest with its pairs rebuilt, plus the unpaired remainder.
    Idempotent: pairing an already-paired manifest reproduces the same pairs.
    """
    by_key: dict[tuple[str, str], dict[str, UtteranceRecord]] = {}
    for rec in manifest.records:
        by_key.setdefault((rec.speaker_id, rec.utterance_id), {})[rec.style] = rec
    pairs = []
    remainder = []
    for (speaker, utterance), styles in sorted(by_key.items()):
        if "whisper" in styles and "normal" in styles:
            pairs.append(
                UtterancePair(
                    speaker_id=speaker,
                    utterance_id=utterance,
                    whisper=styles["whisper"],
                    normal=styles["normal"],
                )
            )
        else:
            remainder.extend(styles.values())
    manifest.pairs = pairs
    return manifest, remainder


def speaker_view(manifest: CorpusManifest, speaker_id: str) -> CorpusManifest:
    """Manifest restricted to one speaker; raises if the speaker is absent."""
    records = manifest.records_for(speaker_id)
    if not records:
        raise SpeakerNotFoundError(f"speaker {speaker_id!r} not present in manifest")
    kept_ids = {r.utterance_id for r in records}
    view = CorpusManifest(
        records=records,
        split={u: s for u, s in manifest.split.items() if u in kept_ids},
    )
    view, _ = pair_utterances(view)
    return view


def assign_split(
    manifest: CorpusManifest,
    test_fraction: float = 0.07,
    seed: int = 0,
    test_list: Optional[str | Path] = None,
) -> CorpusManifest:
    """Assign every utterance id to train or test.

    If `test_list` names a file of utterance ids, that published partition
    wins; otherwise a seeded shuffle holds out `test_fraction` of the ids.
    Deterministic: the same seed and ids always produce the same split.
    """
    ids = sorted({r.utterance_id for r in manifest.records})
    if test_list is not None:
        listed = {
            line.strip() for line in Path(test_list).read_text().splitlines() if line.strip()
        }
        manifest.split = {u: ("test" if u in listed else "train") for u in ids}
        return manifest
    shuffled = list(ids)
    random.Random(seed).shuffle(shuffled)
    n_test = int(round(test_fraction * len(ids)))
    test_ids = set(shuffled[:n_test])
    manifest.split = {u: ("test" if u in test_ids else "train") for u in ids}
    return manifest


def subset_by_split(manifest: CorpusManifest, part: str) -> CorpusManifest:
    records = [r for r in manifest.records if manifest.split.get(r.utterance_id) == part]
    view = CorpusManifest(
        records=records, split={u: s for u, s in manifest.split.items() if s == part}
    )
    view, _ = pair_utterances(view)
    return view


def save_manifest(manifest: CorpusManifest, path: str | Path) -> None:
    """One JSON record per line, deterministically ordered."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in sorted(
            manifest.records, key=lambda r: (r.speaker_id, r.utterance_id, r.style)
        ):
            row = {
                "speaker_id": rec.speaker_id,
                "utterance_id": rec.utterance_id,
                "style": rec.style,
                "site": rec.site,
                "audio_path": rec.audio_path,
                "duration_s": round(rec.duration_s, 6),
                "split": manifest.split.get(rec.utterance_id),
            }
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def load_manifest(path: str | Path) -> CorpusManifest:
    records = []
    split = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CorpusError(f"cannot read manifest {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}:{lineno}: malformed manifest line: {exc}") from exc
        part = row.pop("split", None)
        if part is not None:
            split[row["utterance_id"]] = part
        records.append(UtteranceRecord(**row).validate())
    manifest = CorpusManifest(records=records, split=split)
    manifest, _ = pair_utterances(manifest)
    return manifest
