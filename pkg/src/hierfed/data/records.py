"""Validated event/student records and the immutable Dataset container."""

from __future__ import annotations

from dataclasses import dataclass, field

EVENT_KINDS = ("video", "quiz_response", "forum")
FORUM_ACTIONS = ("forum_post", "forum_reply", "forum_view")
GENDERS = ("M", "F")
CONTINENTS = ("AS", "AF", "EU", "NA", "SA")


@dataclass(frozen=True)
class EventRecord:
    """One log line; exactly the fields its kind requires are present."""
    student_id: str
    course_id: str
    kind: str
    video_id: str | None = None
    response: int | None = None
    forum_action: str | None = None
    timestamp: int = 0

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.timestamp < 0:
            raise ValueError("timestamp must be nonnegative")
        if self.kind == "video":
            ok = (self.video_id is not None and self.response is None
                  and self.forum_action is None)
        elif self.kind == "quiz_response":
            ok = (self.video_id is not None and self.response in (0, 1)
                  and self.forum_action is None)
        else:
            ok = (self.video_id is None and self.response is None
                  and self.forum_action in FORUM_ACTIONS)
        if not ok:
            raise ValueError(f"fields inconsistent with kind {self.kind!r}")


@dataclass(frozen=True)
class StudentRecord:
    """Roster row; demographic fields are independently optional."""
    student_id: str
    course_id: str
    gender: str | None = None
    continent: str | None = None
    birth_year: int | None = None
    outcome: int = 0

    def __post_init__(self):
        if self.gender is not None and self.gender not in GENDERS:
            raise ValueError(f"gender must be one of {GENDERS}, got {self.gender!r}")
        if self.continent is not None and self.continent not in CONTINENTS:
            raise ValueError(
                f"continent must be one of {CONTINENTS}, got {self.continent!r}")
        if self.outcome not in (0, 1):
            raise ValueError(f"outcome must be 0/1, got {self.outcome!r}")


@dataclass
class Dataset:
    """Immutable-after-construction view of one ingested dataset."""
    students: dict = field(default_factory=dict)           # id -> StudentRecord
    events_by_student: dict = field(default_factory=dict)  # id -> [EventRecord]

    @property
    def course_ids(self):
        return tuple(sorted({s.course_id for s in self.students.values()}))

    def students_by_course(self) -> dict:
        out = {c: [] for c in self.course_ids}
        for sid in sorted(self.students):
            out[self.students[sid].course_id].append(sid)
        return out

    def fingerprint_ids(self, student_ids) -> str:
        """Stable text form of a student set, for deriving RNG streams."""
        return ",".join(sorted(student_ids))
