"""CSV / JSON-Lines ingestion with per-line error reporting.

Events are sorted per student by (timestamp, input order); repeated quiz
responses for the same (student, video) keep the first and are logged.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

from ..errors import DataError
from .records import Dataset, EventRecord, StudentRecord

logger = logging.getLogger(__name__)

EVENTS_HEADER = ["student_id", "course_id", "kind", "video_id", "response",
                 "forum_action", "timestamp"]
STUDENTS_HEADER = ["student_id", "course_id", "gender", "continent",
                   "birth_year", "outcome"]


def _opt(value):
    if value is None:
        return None
    value = str(value).strip()
    return value or None


def _opt_int(value, what: str):
    value = _opt(value)
    if value is None:
        return None
    try:
        return int(value)
    except ValueError:
        raise ValueError(f"{what} must be an integer, got {value!r}") from None


def _iter_rows(path: Path, header):
    """Yield (line_number, field dict) from a CSV or JSON-Lines file."""
    if path.suffix == ".jsonl":
        with open(path, encoding="utf-8") as fh:
            for ln, raw in enumerate(fh, start=1):
                raw = raw.strip()
                if not raw:
                    continue
                try:
                    row = json.loads(raw)
                except json.JSONDecodeError as exc:
                    raise DataError(f"{path}:{ln}: invalid JSON: {exc}") from None
                if not isinstance(row, dict):
                    raise DataError(f"{path}:{ln}: expected an object")
                unknown = set(row) - set(header)
                if unknown:
                    raise DataError(f"{path}:{ln}: unknown fields {sorted(unknown)}")
                yield ln, {k: row.get(k) for k in header}
    else:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                first = next(reader)
            except StopIteration:
                raise DataError(f"{path}:1: empty file, expected header") from None
            if first != header:
                raise DataError(f"{path}:1: bad header {first!r}, expected {header!r}")
            for ln, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise DataError(f"{path}:{ln}: expected {len(header)} fields, "
                                    f"got {len(row)}")
                yield ln, dict(zip(header, row))


def _parse_event(fields) -> EventRecord:
    response = _opt_int(fields.get("response"), "response")
    ts = _opt_int(fields.get("timestamp"), "timestamp")
    if ts is None:
        raise ValueError("timestamp is required")
    return EventRecord(
        student_id=str(fields["student_id"]).strip(),
        course_id=str(fields["course_id"]).strip(),
        kind=str(fields["kind"]).strip(),
        video_id=_opt(fields.get("video_id")),
        response=response,
        forum_action=_opt(fields.get("forum_action")),
        timestamp=ts,
    )


def _parse_student(fields) -> StudentRecord:
    outcome = _opt_int(fields.get("outcome"), "outcome")
    if outcome is None:
        raise ValueError("outcome is required")
    return StudentRecord(
        student_id=str(fields["student_id"]).strip(),
        course_id=str(fields["course_id"]).strip(),
        gender=_opt(fields.get("gender")),
        continent=_opt(fields.get("continent")),
        birth_year=_opt_int(fields.get("birth_year"), "birth_year"),
        outcome=outcome,
    )


def ingest(events_path, students_path) -> Dataset:
    """Load and validate the two files into a Dataset.

    Raises DataError with the file and line number on any malformed row or
    on an event whose student is missing from the roster.
    """
    events_path, students_path = Path(events_path), Path(students_path)
    students: dict[str, StudentRecord] = {}
    for ln, fields in _iter_rows(students_path, STUDENTS_HEADER):
        try:
            rec = _parse_student(fields)
        except ValueError as exc:
            raise DataError(f"{students_path}:{ln}: {exc}") from None
        if rec.student_id in students:
            raise DataError(f"{students_path}:{ln}: duplicate student id "
                            f"{rec.student_id!r}")
        students[rec.student_id] = rec

    events_by_student = {sid: [] for sid in students}
    order: dict[str, int] = {}
    for ln, fields in _iter_rows(events_path, EVENTS_HEADER):
        try:
            ev = _parse_event(fields)
        except ValueError as exc:
            raise DataError(f"{events_path}:{ln}: {exc}") from None
        if ev.student_id not in students:
            raise DataError(f"{events_path}:{ln}: unknown student "
                            f"{ev.student_id!r}")
        if ev.course_id != students[ev.student_id].course_id:
            raise DataError(f"{events_path}:{ln}: event course {ev.course_id!r} "
                            f"does not match roster course "
                            f"{students[ev.student_id].course_id!r}")
        events_by_student[ev.student_id].append(ev)

    n_dup = 0
    for sid, events in events_by_student.items():
        events.sort(key=lambda e: e.timestamp)  # stable: input order breaks ties
        deduped, answered = [], set()
        for ev in events:
            if ev.kind == "quiz_response":
                if ev.video_id in answered:
                    n_dup += 1
                    continue
                answered.add(ev.video_id)
            deduped.append(ev)
        events_by_student[sid] = deduped
    if n_dup:
        logger.warning("dropped %d repeated quiz responses (first kept)", n_dup)

    return Dataset(students=students, events_by_student=events_by_student)


def export_dataset(dataset: Dataset, events_path, students_path):
    """Write a Dataset back out in the canonical CSV formats."""
    students_path = Path(students_path)
    events_path = Path(events_path)
    with open(students_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(STUDENTS_HEADER)
        for sid in sorted(dataset.students):
            s = dataset.students[sid]
            w.writerow([s.student_id, s.course_id, s.gender or "",
                        s.continent or "",
                        "" if s.birth_year is None else s.birth_year,
                        s.outcome])
    with open(events_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(EVENTS_HEADER)
        for sid in sorted(dataset.events_by_student):
            for ev in dataset.events_by_student[sid]:
                w.writerow([ev.student_id, ev.course_id, ev.kind,
                            ev.video_id or "",
                            "" if ev.response is None else ev.response,
                            ev.forum_action or "", ev.timestamp])
