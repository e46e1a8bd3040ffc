"""Zero-shot and few-shot multimodal prompt assembly.

The assembled payload is an ordered list of text segments and image
attachments: role-play sentence, per-modality description sentences with
their payloads, the task sentence with the class-label block, optional
example blocks, and a final rule sentence. Assembly is a pure function of
its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

__all__ = [
    "EEG_IMAGE",
    "FACE_IMAGE",
    "AUDIO_FEATURES",
    "TRANSCRIPT",
    "ROLE_PLAY",
    "ROLE_PLAY_VERBATIM",
    "RULE",
    "ClassLabel",
    "TaskSpec",
    "ModalityDescriptor",
    "ShotExample",
    "PromptPart",
    "AssembledPrompt",
    "class_label_block",
    "build_zero_shot",
    "build_few_shot",
    "render_text",
]

EEG_IMAGE = "eeg-image"
FACE_IMAGE = "face-image"
AUDIO_FEATURES = "audio-feature-text"
TRANSCRIPT = "transcript-text"

_IMAGE_KINDS = {EEG_IMAGE, FACE_IMAGE}
_TEXT_KINDS = {AUDIO_FEATURES, TRANSCRIPT}

_MOD_NAMES = {
    EEG_IMAGE: "EEG",
    FACE_IMAGE: "Facial expression",
    AUDIO_FEATURES: "Audio feature",
    TRANSCRIPT: "Audio transcript",
}

ROLE_PLAY = (
    "Imagine you are a mental health expert at analyzing the emotion "
    "and mental health status."
)
# The published template repeats "expert"; kept available for replication.
ROLE_PLAY_VERBATIM = (
    "Imagine you are a mental health expert expert at analyzing the emotion "
    "and mental health status."
)
RULE = "[Rule]: Do not output other text."


@dataclass(frozen=True)
class ClassLabel:
    index: int
    name: str
    description: str


@dataclass(frozen=True)
class TaskSpec:
    """Symptom under analysis plus the ordered class-label set."""

    symptom: str
    classes: tuple[ClassLabel, ...]

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        indices = [c.index for c in self.classes]
        if indices != list(range(len(indices))):
            raise ValueError(f"class indices must be contiguous from 0, got {indices}")
        names = [c.name for c in self.classes]
        if len(set(names)) != len(names):
            raise ValueError("class names must be unique")

    @property
    def n_classes(self) -> int:
        return len(self.classes)


@dataclass(frozen=True)
class ModalityDescriptor:
    """One modality of a sample: its template clauses and its payload."""

    kind: str
    collection_desc: str
    visualization_desc: str
    payload: bytes | str

    def __post_init__(self):
        if self.kind in _IMAGE_KINDS:
            if not isinstance(self.payload, bytes):
                raise ValueError(f"{self.kind} requires an image (bytes) payload")
        elif self.kind in _TEXT_KINDS:
            if not isinstance(self.payload, str):
                raise ValueError(f"{self.kind} requires a text payload")
        else:
            raise ValueError(f"unknown modality kind {self.kind!r}")

    @property
    def sentence(self) -> str:
        return (
            f"{_MOD_NAMES[self.kind]} data is collected through "
            f"{self.collection_desc} and visualized in "
            f"{self.visualization_desc} form."
        )


@dataclass(frozen=True)
class ShotExample:
    modalities: tuple[ModalityDescriptor, ...]
    true_label: int


@dataclass(frozen=True)
class PromptPart:
    kind: str  # "text" | "image"
    text: str | None = None
    image: bytes | None = None


def _text(s: str) -> PromptPart:
    return PromptPart(kind="text", text=s)


def _image(b: bytes) -> PromptPart:
    return PromptPart(kind="image", image=b)


@dataclass(frozen=True)
class AssembledPrompt:
    """Structured prompt; ``parts`` flattens it into the wire order.

    Without examples the payloads ride with their modality sentences; with
    examples the template sentences come first, then the example blocks,
    then the query payloads, and the rule sentence is always last.
    """

    role_play: str
    modalities: tuple[ModalityDescriptor, ...]
    task_text: str
    rule: str = RULE
    examples: tuple[ShotExample, ...] = field(default=())

    def _modality_parts(self, mod: ModalityDescriptor, with_sentence: bool) -> list[PromptPart]:
        if mod.kind in _IMAGE_KINDS:
            parts = [_text(mod.sentence)] if with_sentence else []
            parts.append(_image(mod.payload))
            return parts
        if with_sentence:
            return [_text(f"{mod.sentence}\n{mod.payload}")]
        return [_text(mod.payload)]

    @property
    def parts(self) -> tuple[PromptPart, ...]:
        out = [_text(self.role_play)]
        if not self.examples:
            for mod in self.modalities:
                out.extend(self._modality_parts(mod, with_sentence=True))
            out.append(_text(self.task_text))
        else:
            for mod in self.modalities:
                out.append(_text(mod.sentence))
            out.append(_text(self.task_text))
            for shot in self.examples:
                out.append(_text("Example:"))
                for mod in shot.modalities:
                    out.extend(self._modality_parts(mod, with_sentence=True))
                out.append(_text(self._answer_sentence(shot)))
            for mod in self.modalities:
                out.extend(self._modality_parts(mod, with_sentence=False))
        out.append(_text(self.rule))
        return tuple(out)

    _answer_names: tuple[str, ...] = field(default=())

    def _answer_sentence(self, shot: ShotExample) -> str:
        name = self._answer_names[shot.true_label]
        return f"The correct answer is {shot.true_label} ({name})."


def class_label_block(task: TaskSpec) -> str:
    """Comma-joined "0 denotes ..." clauses, one per class, period-terminated."""
    if task.n_classes < 2:
        raise ValueError("a classification task needs at least 2 classes")
    return ", ".join(f"{c.index} denotes {c.description}" for c in task.classes) + "."


def build_zero_shot(modalities, task: TaskSpec, verbatim_role_play: bool = False) -> AssembledPrompt:
    """Assemble the zero-shot prompt: role-play + task specification + rule."""
    modalities = tuple(modalities)
    if not modalities:
        raise ValueError(
            "at least one modality is required (the no-modality baseline "
            "does not query the model)"
        )
    task_text = f"Analyze the {task.symptom} status of the person. {class_label_block(task)}"
    return AssembledPrompt(
        role_play=ROLE_PLAY_VERBATIM if verbatim_role_play else ROLE_PLAY,
        modalities=modalities,
        task_text=task_text,
        _answer_names=tuple(c.name for c in task.classes),
    )


def build_few_shot(base: AssembledPrompt, shots, task: TaskSpec) -> AssembledPrompt:
    """Append labelled example blocks to a zero-shot prompt.

    With no shots the prompt is returned unchanged; example blocks are
    inserted between the template and the query payloads.
    """
    shots = tuple(shots)
    if not shots:
        return base
    base_kinds = tuple(m.kind for m in base.modalities)
    for shot in shots:
        if not 0 <= shot.true_label < task.n_classes:
            raise ValueError(
                f"shot label {shot.true_label} out of range for "
                f"{task.n_classes}-class task"
            )
        if tuple(m.kind for m in shot.modalities) != base_kinds:
            raise ValueError("shot modality kinds must match the base prompt")
    return replace(base, examples=base.examples + shots)


def render_text(prompt: AssembledPrompt) -> str:
    """Text parts verbatim, image attachments as [IMAGE] placeholder lines."""
    lines = []
    for part in prompt.parts:
        lines.append(part.text if part.kind == "text" else "[IMAGE]")
    return "\n".join(lines)
