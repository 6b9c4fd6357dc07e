"""VOC-style XML annotations and tab-separated dataset manifests.

Internally boxes are 0-based with exclusive right/bottom edges; the XML uses
the 1-based inclusive convention, so xmin_xml = xmin + 1 and xmax_xml =
xmin + width.  Files are written to a temp path and renamed so readers never
see a partial file.
"""

from __future__ import annotations

import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DuplicatePath, InvariantViolation, IoFailure, ParseError
from .geometry import Box

DROPPED_PREFIX = "DROPPED:"


@dataclass(frozen=True)
class LabeledBox:
    label: str
    box: Box


@dataclass
class Annotation:
    image_filename: str
    image_width: int
    image_height: int
    objects: list[LabeledBox] = field(default_factory=list)

    def validate(self) -> "Annotation":
        if self.image_width < 1 or self.image_height < 1:
            raise InvariantViolation(
                f"bad image size {self.image_width}x{self.image_height}"
            )
        for obj in self.objects:
            if not obj.box.fits_in(self.image_width, self.image_height):
                raise InvariantViolation(
                    f"box {obj.box} exceeds image {self.image_width}x{self.image_height}"
                )
        return self


def write_xml(annotation: Annotation, path) -> None:
    annotation.validate()
    root = ET.Element("annotation")
    ET.SubElement(root, "filename").text = annotation.image_filename
    size = ET.SubElement(root, "size")
    ET.SubElement(size, "width").text = str(annotation.image_width)
    ET.SubElement(size, "height").text = str(annotation.image_height)
    ET.SubElement(size, "depth").text = "3"
    for obj in annotation.objects:
        node = ET.SubElement(root, "object")
        ET.SubElement(node, "name").text = obj.label
        bnd = ET.SubElement(node, "bndbox")
        ET.SubElement(bnd, "xmin").text = str(obj.box.xmin + 1)
        ET.SubElement(bnd, "ymin").text = str(obj.box.ymin + 1)
        ET.SubElement(bnd, "xmax").text = str(obj.box.xmin + obj.box.width)
        ET.SubElement(bnd, "ymax").text = str(obj.box.ymin + obj.box.height)
    ET.indent(root)
    data = ET.tostring(root, encoding="unicode") + "\n"
    _atomic_write_text(path, data)


def _atomic_write_text(path, data: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _int_text(parent, tag: str, context: str) -> int:
    node = parent.find(tag)
    if node is None or node.text is None:
        raise ParseError(f"{context}: missing <{tag}>")
    try:
        return int(node.text)
    except ValueError as exc:
        raise ParseError(f"{context}: <{tag}> is not an integer: {node.text!r}") from exc


def read_xml(path) -> Annotation:
    path = Path(path)
    if not path.exists():
        raise IoFailure(f"annotation file {path} does not exist")
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as exc:
        raise ParseError(f"{path}: malformed XML: {exc}") from exc
    if root.tag != "annotation":
        raise ParseError(f"{path}: root element is <{root.tag}>, expected <annotation>")
    filename_node = root.find("filename")
    if filename_node is None or filename_node.text is None:
        raise ParseError(f"{path}: missing <filename>")
    size = root.find("size")
    if size is None:
        raise ParseError(f"{path}: missing <size>")
    width = _int_text(size, "width", str(path))
    height = _int_text(size, "height", str(path))
    objects = []
    for node in root.findall("object"):
        name_node = node.find("name")
        if name_node is None or name_node.text is None:
            raise ParseError(f"{path}: <object> missing <name>")
        bnd = node.find("bndbox")
        if bnd is None:
            raise ParseError(f"{path}: <object> missing <bndbox>")
        xmin = _int_text(bnd, "xmin", str(path))
        ymin = _int_text(bnd, "ymin", str(path))
        xmax = _int_text(bnd, "xmax", str(path))
        ymax = _int_text(bnd, "ymax", str(path))
        if xmin < 1 or ymin < 1 or xmax < xmin or ymax < ymin:
            raise InvariantViolation(f"{path}: bad bndbox {xmin},{ymin},{xmax},{ymax}")
        box = Box(xmin - 1, ymin - 1, xmax - xmin + 1, ymax - ymin + 1)
        objects.append(LabeledBox(label=name_node.text, box=box))
    annotation = Annotation(
        image_filename=filename_node.text,
        image_width=width,
        image_height=height,
        objects=objects,
    )
    return annotation.validate()


@dataclass
class ManifestEntry:
    image_path: str
    n_objects: int
    annotation_path: str | None = None
    dropped_reason: str | None = None

    def __post_init__(self):
        if self.n_objects < 1:
            raise ValueError("n_objects must be >= 1")
        if (self.annotation_path is None) == (self.dropped_reason is None):
            raise ValueError("entry needs exactly one of annotation_path or dropped_reason")

    @property
    def dropped(self) -> bool:
        return self.dropped_reason is not None


def write_manifest(entries: list[ManifestEntry], path) -> None:
    seen = set()
    lines = []
    for entry in entries:
        if entry.image_path in seen:
            raise DuplicatePath(f"duplicate image path {entry.image_path!r}")
        seen.add(entry.image_path)
        third = (
            DROPPED_PREFIX + entry.dropped_reason if entry.dropped else entry.annotation_path
        )
        lines.append(f"{entry.image_path}\t{entry.n_objects}\t{third}\n")
    _atomic_write_text(path, "".join(lines))


def read_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    if not path.exists():
        raise IoFailure(f"manifest {path} does not exist")
    entries = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(f"{path}:{lineno}: expected 3 tab-separated fields")
            image_path, raw_n, third = parts
            try:
                n_objects = int(raw_n)
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad object count {raw_n!r}") from exc
            if n_objects < 1:
                raise ParseError(f"{path}:{lineno}: object count must be >= 1")
            if image_path in seen:
                raise DuplicatePath(f"{path}:{lineno}: duplicate image path {image_path!r}")
            seen.add(image_path)
            if third.startswith(DROPPED_PREFIX):
                entries.append(
                    ManifestEntry(image_path, n_objects, dropped_reason=third[len(DROPPED_PREFIX):])
                )
            else:
                entries.append(ManifestEntry(image_path, n_objects, annotation_path=third))
    return entries
