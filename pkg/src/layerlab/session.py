"""Annotation session: one model, one live label assignment, undo history.

A session has a single writer at a time; every mutation bumps the
revision, and callers that send a stale revision get a conflict. Undo
restores full assignment snapshots, so replaying the stack always
reproduces byte-identical assignment JSON.
"""

from __future__ import annotations

import json
import threading
import uuid
from typing import Optional

from .errors import LayerLabError
from .labeling import LabelAssignment
from .model import CharacterModel


class RevisionConflict(LayerLabError):
    """A writer acted on a stale revision of the session."""


class Session:
    def __init__(self, model: CharacterModel, assignment: Optional[LabelAssignment] = None):
        self.session_id = uuid.uuid4().hex
        self.model = model
        self._assignment = assignment or LabelAssignment.from_model(model)
        self._undo: list[LabelAssignment] = []
        self.revision = 0
        self.dirty = False
        self._lock = threading.Lock()

    @property
    def assignment(self) -> LabelAssignment:
        return self._assignment

    def assignment_json(self) -> str:
        return json.dumps(self._assignment.to_json(self.model.taxonomy), sort_keys=True)

    def mutate(self, new_assignment: LabelAssignment, expected_revision: Optional[int] = None) -> int:
        """Install a new assignment; returns the new revision.

        Raises RevisionConflict when expected_revision is stale.
        """
        with self._lock:
            if expected_revision is not None and expected_revision != self.revision:
                raise RevisionConflict(
                    f"revision {expected_revision} is stale (current {self.revision})"
                )
            self._undo.append(self._assignment)
            self._assignment = new_assignment
            self.revision += 1
            self.dirty = True
            return self.revision

    def undo(self) -> int:
        """Revert the most recent mutation; returns the new revision."""
        with self._lock:
            if not self._undo:
                raise RevisionConflict("nothing to undo")
            self._assignment = self._undo.pop()
            self.revision += 1
            self.dirty = bool(self._undo)
            return self.revision

    def can_undo(self) -> bool:
        return bool(self._undo)
