"""Sequence types, vocabulary, and one-hot encodings for the two tasks.

Knowledge tracing consumes (course, video) item one-hots; the response is the
prediction target, not an input. Outcome prediction consumes a wider step
encoding: course + video + response + forum-action blocks, where a step is
either a video interaction (forum block zero) or a forum action (video and
response blocks zero).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FORUM_ACTIONS = ("forum_post", "forum_reply", "forum_view")

N_RESPONSE_SLOTS = 2
N_FORUM_SLOTS = len(FORUM_ACTIONS)


@dataclass(frozen=True)
class VideoStep:
    """A video interaction: watched video v in course c, optional quiz response."""
    course: int
    video: int
    response: int | None = None


@dataclass(frozen=True)
class ForumStep:
    """A forum action in course c; action indexes FORUM_ACTIONS."""
    course: int
    action: int


@dataclass
class InteractionSeq:
    """Chronological quiz interactions of one student for knowledge tracing."""
    student_id: str
    items: list  # list of (course index, video index)
    responses: list  # list of 0/1, same length as items

    def __post_init__(self):
        if len(self.items) != len(self.responses):
            raise ValueError(
                f"student {self.student_id}: {len(self.items)} items vs "
                f"{len(self.responses)} responses")
        if len(self.items) < 1:
            raise ValueError(f"student {self.student_id}: empty interaction sequence")

    def __len__(self) -> int:
        return len(self.items)


@dataclass
class ActivitySeq:
    """Chronological mixed video/forum steps plus the pass/fail label."""
    student_id: str
    steps: list  # VideoStep | ForumStep
    outcome: int

    def __post_init__(self):
        if len(self.steps) < 1:
            raise ValueError(f"student {self.student_id}: empty activity sequence")
        if self.outcome not in (0, 1):
            raise ValueError(f"student {self.student_id}: outcome must be 0/1")

    def __len__(self) -> int:
        return len(self.steps)


class Vocab:
    """Index maps for courses and videos.

    Built from the training split only; unseen videos map to a reserved
    trailing slot when reserve_unknown is set. Courses must always be known.
    """

    def __init__(self, course_ids, video_ids, reserve_unknown: bool = True):
        self.course_ids = tuple(sorted(set(course_ids)))
        self.video_ids = tuple(sorted(set(video_ids)))
        if not self.course_ids:
            raise ValueError("vocabulary needs at least one course")
        self.reserve_unknown = bool(reserve_unknown)
        self._course_index = {c: j for j, c in enumerate(self.course_ids)}
        self._video_index = {v: j for j, v in enumerate(self.video_ids)}

    @property
    def n_courses(self) -> int:
        return len(self.course_ids)

    @property
    def n_video_slots(self) -> int:
        return len(self.video_ids) + (1 if self.reserve_unknown else 0)

    @property
    def unknown_video(self) -> int:
        if not self.reserve_unknown:
            raise ValueError("vocabulary has no reserved unknown-video slot")
        return len(self.video_ids)

    @property
    def kt_input_dim(self) -> int:
        return self.n_courses + self.n_video_slots

    @property
    def op_input_dim(self) -> int:
        return self.kt_input_dim + N_RESPONSE_SLOTS + N_FORUM_SLOTS

    def course_index(self, course_id: str) -> int:
        try:
            return self._course_index[course_id]
        except KeyError:
            raise ValueError(f"unknown course id {course_id!r}") from None

    def video_index(self, video_id: str) -> int:
        j = self._video_index.get(video_id)
        if j is None:
            if not self.reserve_unknown:
                raise ValueError(f"unknown video id {video_id!r}")
            return self.unknown_video
        return j

    def __eq__(self, other) -> bool:
        return (isinstance(other, Vocab)
                and self.course_ids == other.course_ids
                and self.video_ids == other.video_ids
                and self.reserve_unknown == other.reserve_unknown)

    def __repr__(self) -> str:
        return (f"Vocab({self.n_courses} courses, {len(self.video_ids)} videos, "
                f"reserve_unknown={self.reserve_unknown})")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture description: task, hidden width, derived input width."""
    task: str
    hidden_dim: int
    input_dim: int

    def __post_init__(self):
        if self.task not in ("KT", "OP"):
            raise ValueError(f"task must be KT or OP, got {self.task!r}")
        if self.hidden_dim < 1 or self.input_dim < 1:
            raise ValueError("hidden_dim and input_dim must be >= 1")

    @staticmethod
    def kt(vocab: Vocab, hidden_dim: int = 48) -> "ModelSpec":
        return ModelSpec("KT", hidden_dim, vocab.kt_input_dim)

    @staticmethod
    def op(vocab: Vocab, hidden_dim: int = 48) -> "ModelSpec":
        return ModelSpec("OP", hidden_dim, vocab.op_input_dim)


def _check_range(j: int, n: int, what: str):
    if not 0 <= j < n:
        raise ValueError(f"{what} index {j} out of range [0, {n})")


def encode_interaction(c: int, v: int, vocab: Vocab) -> np.ndarray:
    """Item one-hot: course block then video block; exactly two ones."""
    _check_range(c, vocab.n_courses, "course")
    _check_range(v, vocab.n_video_slots, "video")
    out = np.zeros(vocab.kt_input_dim)
    out[c] = 1.0
    out[vocab.n_courses + v] = 1.0
    return out


def encode_activity(step, vocab: Vocab) -> np.ndarray:
    """Activity one-hot: course + video + response + forum blocks.

    Video steps zero the forum block; forum steps zero the video and
    response blocks. A video step without a recorded response leaves the
    response block zero as well.
    """
    if not isinstance(step, (VideoStep, ForumStep)):
        raise TypeError(f"unsupported step type {type(step).__name__}")
    out = np.zeros(vocab.op_input_dim)
    _check_range(step.course, vocab.n_courses, "course")
    out[step.course] = 1.0
    base = vocab.n_courses
    if isinstance(step, VideoStep):
        _check_range(step.video, vocab.n_video_slots, "video")
        out[base + step.video] = 1.0
        if step.response is not None:
            _check_range(step.response, N_RESPONSE_SLOTS, "response")
            out[base + vocab.n_video_slots + step.response] = 1.0
    else:
        _check_range(step.action, N_FORUM_SLOTS, "forum action")
        out[base + vocab.n_video_slots + N_RESPONSE_SLOTS + step.action] = 1.0
    return out


def encode_kt_student(seq: InteractionSeq, vocab: Vocab):
    """Dense per-student arrays for knowledge tracing.

    Returns (x, targets): x is (L-1, D) item encodings for steps 1..L-1 and
    targets is (L-1,) responses at steps 2..L, since the prediction made
    after consuming item t scores the response to item t+1. A length-1
    sequence yields zero rows.
    """
    L = len(seq)
    x = np.zeros((max(L - 1, 0), vocab.kt_input_dim))
    targets = np.zeros(max(L - 1, 0), dtype=np.int64)
    for t in range(L - 1):
        c, v = seq.items[t]
        x[t] = encode_interaction(c, v, vocab)
        targets[t] = seq.responses[t + 1]
    return x, targets


def encode_op_student(seq: ActivitySeq, vocab: Vocab):
    """Dense per-student arrays for outcome prediction: ((T, D) x, label)."""
    x = np.zeros((len(seq), vocab.op_input_dim))
    for t, step in enumerate(seq.steps):
        x[t] = encode_activity(step, vocab)
    return x, int(seq.outcome)


def pad_batch(arrays):
    """Stack variable-length (L_i, D) arrays into (B, T_max, D) plus lengths."""
    if not arrays:
        raise ValueError("pad_batch: empty batch")
    lengths = np.array([a.shape[0] for a in arrays], dtype=np.int64)
    D = arrays[0].shape[1]
    T = int(lengths.max())
    out = np.zeros((len(arrays), T, D))
    for b, a in enumerate(arrays):
        if a.shape[1] != D:
            raise ValueError(f"pad_batch: inconsistent widths {a.shape[1]} vs {D}")
        out[b, :a.shape[0], :] = a
    return out, lengths
