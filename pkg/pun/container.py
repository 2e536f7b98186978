"""
Byte-reproducible artifacts: tensor containers, checkpoints, dataset
directories, CSV tables and PGM images.

A TensorContainer is a UTF-8 JSON header line (sorted keys) followed by the
raw little-endian payload. Several containers may follow each other in one
file; ContainerDecoder splits such a stream back into containers.
"""
import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import torch
from attrs import asdict, define, field

from . import constants, util
from .denoiser import DenoiserArch, DenoiserParams, build_layout
from .exceptions import ContainerError
from .forward_model import SamplingMask, SensitivityMaps
from .masks import BinaryMask
from .metrics import EvalResult
from .phantom import FAMILIES, DatasetConfig, SampleRecord
from .training import OptimizerConfig, TrainReport
from .unrolled import UnrollConfig

__author__ = "pun-mri Contributors"
__copyright__ = "Copyright 2026 pun-mri Contributors"
__license__ = "Apache License, Version 2.0"


log = util.getLogger(__name__)

DTYPES: Dict[str, np.dtype] = {
    "f64": np.dtype("<f8"),
    "c128": np.dtype("<c16"),
    "u8": np.dtype("u1"),
}
SAMPLE_FIELDS = ("ground_truth", "kspace", "maps", "lines")
READ_CHUNK = 1 << 16
_NEWLINE = b"\n"


def dumps(value: Any) -> str:
    """Canonical JSON text used for every header and manifest."""
    return json.dumps(value, sort_keys=True, indent=2) + "\n"


def _dtype_name(array: np.ndarray) -> str:
    if np.iscomplexobj(array):
        return "c128"
    if array.dtype in (np.uint8, np.bool_):
        return "u8"
    return "f64"


@define(eq=False)
class TensorContainer:
    """One header + payload record."""

    dtype: str = field(validator=util.one_of(*DTYPES))
    shape: Tuple[int, ...] = field(converter=lambda s: tuple(int(n) for n in s))
    payload: bytes = field(converter=bytes)
    extra: Dict[str, Any] = field(factory=dict)

    def __attrs_post_init__(self) -> None:
        expected = int(np.prod(self.shape, dtype=np.int64)) * DTYPES[self.dtype].itemsize
        if len(self.payload) != expected:
            raise ContainerError(
                "payload holds {} bytes, {} {} needs {}".format(
                    len(self.payload), self.dtype, list(self.shape), expected
                )
            )

    @classmethod
    def from_array(cls, value, **extra: Any) -> "TensorContainer":
        if isinstance(value, torch.Tensor):
            value = value.detach().cpu().numpy()
        array = np.asarray(value)
        dtype = _dtype_name(array)
        data = np.ascontiguousarray(array, dtype=DTYPES[dtype])
        return cls(dtype, array.shape, data.tobytes(), extra)

    @property
    def name(self) -> Optional[str]:
        return self.extra.get("name")

    def header(self) -> Dict[str, Any]:
        header = dict(self.extra)
        header.update(
            {"dtype": self.dtype, "shape": list(self.shape), "byte_order": constants.BYTE_ORDER}
        )
        return header

    def to_bytes(self) -> bytes:
        text = json.dumps(self.header(), sort_keys=True, separators=(",", ":"))
        return text.encode("utf-8") + _NEWLINE + self.payload

    def to_array(self) -> np.ndarray:
        return np.frombuffer(self.payload, dtype=DTYPES[self.dtype]).reshape(self.shape)

    def to_tensor(self) -> torch.Tensor:
        return torch.from_numpy(self.to_array().copy())


def _parse_header(line: bytes) -> Dict[str, Any]:
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError("malformed container header: {}".format(exc)) from exc
    if not isinstance(header, dict):
        raise ContainerError("container header must be a JSON object")
    missing = {"dtype", "shape", "byte_order"} - set(header)
    if missing:
        raise ContainerError("container header lacks {}".format(sorted(missing)))
    if header["byte_order"] != constants.BYTE_ORDER:
        raise ContainerError("unsupported byte order {!r}".format(header["byte_order"]))
    if header["dtype"] not in DTYPES:
        raise ContainerError("unsupported dtype {!r}".format(header["dtype"]))
    return header


@define
class ContainerDecoder:
    """
    Stateful decoder for a byte stream of concatenated containers.

    Feed arbitrary chunks to `update`; complete containers are yielded as
    soon as their payload has arrived.
    """

    _buffer: bytes = field(default=b"", init=False)

    def update(self, new_data: bytes) -> Iterator[TensorContainer]:
        self._buffer = self._buffer + new_data
        while True:
            end_of_header = self._buffer.find(_NEWLINE)
            if end_of_header < 0:
                # header not complete yet
                return
            header = _parse_header(self._buffer[:end_of_header])
            shape = header["shape"]
            size = int(np.prod(shape, dtype=np.int64)) * DTYPES[header["dtype"]].itemsize
            start = end_of_header + 1
            if len(self._buffer) < start + size:
                return
            payload, self._buffer = (
                self._buffer[start : start + size],
                self._buffer[start + size :],
            )
            extra = {
                k: v for k, v in header.items() if k not in ("dtype", "shape", "byte_order")
            }
            yield TensorContainer(header["dtype"], shape, payload, extra)

    def flush(self) -> None:
        """Call at end of stream; leftover bytes mean a truncated container."""
        if self._buffer:
            raise ContainerError("{} trailing bytes in container stream".format(len(self._buffer)))


def iter_containers(path: Path) -> Iterator[TensorContainer]:
    """Stream the containers stored in `path`."""
    decoder = ContainerDecoder()
    with open(path, "rb") as stream:
        for chunk in iter(lambda: stream.read(READ_CHUNK), b""):
            yield from decoder.update(chunk)
    decoder.flush()


def write_containers(path: Path, containers: Iterable[TensorContainer]) -> None:
    with open(path, "wb") as stream:
        for container in containers:
            stream.write(container.to_bytes())


def save_tensor(path: Path, value, **extra: Any) -> None:
    write_containers(path, [TensorContainer.from_array(value, **extra)])


def load_tensor(path: Path) -> TensorContainer:
    containers = list(iter_containers(path))
    if len(containers) != 1:
        raise ContainerError("{} holds {} containers, expected 1".format(path, len(containers)))
    return containers[0]


def save_mask(path: Path, mask: BinaryMask) -> None:
    """Packed little bit-endian bytes, with the bit count in the header."""
    packed = np.frombuffer(mask.packed(), dtype=np.uint8)
    save_tensor(path, packed, bits=len(mask))


def load_mask(path: Path) -> BinaryMask:
    container = load_tensor(path)
    if container.dtype != "u8" or "bits" not in container.extra:
        raise ContainerError("{} is not a packed mask".format(path))
    bits = int(container.extra["bits"])
    if len(container.payload) != (bits + 7) // 8:
        raise ContainerError("{} packs {} bytes for {} bits".format(path, container.shape, bits))
    return BinaryMask.from_packed(container.payload, bits)


def conventions() -> Dict[str, str]:
    return {
        "complex": constants.COMPLEX_CONVENTION,
        "psnr": constants.PSNR_CONVENTION,
        "scale": constants.SCALE_CONVENTION,
    }


def versions() -> Dict[str, str]:
    from . import __version__  # pylint: disable=import-outside-toplevel

    return {"numpy": np.__version__, "pun": __version__, "torch": torch.__version__}


@define(eq=False)
class Checkpoint:
    """
    Denoiser weights, optional pruning mask and keep-probabilities, and the
    manifest describing how they were produced.
    """

    params: DenoiserParams
    manifest: Dict[str, Any]
    mask: Optional[BinaryMask] = None
    probabilities: Optional[torch.Tensor] = None

    PARAMS = "params" + constants.CONTAINER_SUFFIX
    MASK = "mask" + constants.CONTAINER_SUFFIX
    PROBABILITIES = "probabilities" + constants.CONTAINER_SUFFIX

    @classmethod
    def create(  # pylint: disable=too-many-arguments
        cls,
        params: DenoiserParams,
        arch: DenoiserArch,
        unroll: UnrollConfig,
        optimizer: OptimizerConfig,
        mode: str,
        mask: Optional[BinaryMask] = None,
        probabilities: Optional[torch.Tensor] = None,
        **extra: Any,
    ) -> "Checkpoint":
        manifest = {
            "arch": arch.to_dict(),
            "conventions": conventions(),
            "d": params.d,
            "layout": [
                {"kind": spec.kind, "layer": spec.layer, "offset": spec.offset,
                 "shape": list(spec.shape)}
                for spec in params.layout
            ],
            "mode": mode,
            "nonzero": mask.count() if mask is not None else params.d,
            "optimizer": optimizer.to_dict(),
            "unroll": unroll.to_dict(),
            "versions": versions(),
        }
        manifest.update(extra)
        return cls(params, manifest, mask, probabilities)

    @property
    def arch(self) -> DenoiserArch:
        return DenoiserArch.from_dict(self.manifest["arch"])

    @property
    def unroll(self) -> UnrollConfig:
        return UnrollConfig.from_dict(self.manifest["unroll"])

    @property
    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig.from_dict(self.manifest["optimizer"])

    def save(self, directory: Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        save_tensor(directory / self.PARAMS, self.params.flat)
        if self.mask is not None:
            save_mask(directory / self.MASK, self.mask)
        if self.probabilities is not None:
            save_tensor(directory / self.PROBABILITIES, self.probabilities)
        (directory / constants.MANIFEST_NAME).write_text(dumps(self.manifest), encoding="utf-8")
        log.info("wrote checkpoint %s", directory)
        return directory

    @classmethod
    def load(cls, directory: Path) -> "Checkpoint":
        directory = Path(directory)
        manifest_path = directory / constants.MANIFEST_NAME
        if not manifest_path.is_file():
            raise ContainerError("{} is not a checkpoint (no manifest)".format(directory))
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        arch = DenoiserArch.from_dict(manifest["arch"])
        flat = load_tensor(directory / cls.PARAMS)
        if flat.dtype != "f64" or flat.shape != (manifest["d"],):
            raise ContainerError(
                "params container {} {} does not match d={}".format(
                    flat.dtype, list(flat.shape), manifest["d"]
                )
            )
        params = DenoiserParams(build_layout(arch), flat.to_tensor(), arch.residual)
        mask = None
        if (directory / cls.MASK).is_file():
            mask = load_mask(directory / cls.MASK)
        probabilities = None
        if (directory / cls.PROBABILITIES).is_file():
            probabilities = load_tensor(directory / cls.PROBABILITIES).to_tensor()
        return cls(params, manifest, mask, probabilities)


def write_timing(directory: Path, timing: Mapping[str, float]) -> None:
    """Wall-clock sidecar; kept out of the reproducible artifacts."""
    path = Path(directory) / constants.TIMING_NAME
    path.write_text(dumps({k: float(v) for k, v in timing.items()}), encoding="utf-8")


def read_timing(directory: Path) -> Dict[str, float]:
    return json.loads((Path(directory) / constants.TIMING_NAME).read_text(encoding="utf-8"))


def sample_name(index: int) -> str:
    return "sample_{:05d}{}".format(index, constants.CONTAINER_SUFFIX)


def save_dataset(directory: Path, cfg: DatasetConfig, records: Sequence[SampleRecord]) -> Path:
    """One stream file per sample plus a manifest with config and scales."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for index, record in enumerate(records):
        name = sample_name(index)
        write_containers(
            directory / name,
            [
                TensorContainer.from_array(record.ground_truth, name="ground_truth"),
                TensorContainer.from_array(record.kspace, name="kspace"),
                TensorContainer.from_array(record.maps.maps, name="maps"),
                TensorContainer.from_array(record.mask.lines.astype(np.uint8), name="lines"),
            ],
        )
        entries.append({"file": name, "scale": record.scale, "seed": record.seed})
    family = asdict(FAMILIES[cfg.family])
    if cfg.family != "base":
        family["note"] = constants.SHIFTED_FAMILY_NOTE
    manifest = {
        "config": cfg.to_dict(),
        "conventions": conventions(),
        "family": family,
        "samples": entries,
    }
    (directory / constants.MANIFEST_NAME).write_text(dumps(manifest), encoding="utf-8")
    log.info("wrote %d samples to %s", len(records), directory)
    return directory


def _load_sample(path: Path, cfg: DatasetConfig, entry: Mapping[str, Any]) -> SampleRecord:
    fields = {c.name: c for c in iter_containers(path)}
    missing = set(SAMPLE_FIELDS) - set(fields)
    if missing:
        raise ContainerError("{} lacks {}".format(path, sorted(missing)))
    mask = SamplingMask(fields["lines"].to_array() != 0, cfg.acceleration, cfg.acs_width)
    return SampleRecord(
        ground_truth=fields["ground_truth"].to_tensor(),
        kspace=fields["kspace"].to_tensor(),
        maps=SensitivityMaps(fields["maps"].to_tensor()),
        mask=mask,
        scale=float(entry["scale"]),
        seed=int(entry["seed"]),
    )


def load_dataset(directory: Path) -> Tuple[DatasetConfig, List[SampleRecord]]:
    directory = Path(directory)
    manifest_path = directory / constants.MANIFEST_NAME
    if not manifest_path.is_file():
        raise ContainerError("{} is not a dataset directory (no manifest)".format(directory))
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    cfg = DatasetConfig.from_dict(manifest["config"])
    records = [_load_sample(directory / e["file"], cfg, e) for e in manifest["samples"]]
    return cfg, records


def format_float(value: float) -> str:
    """Shortest round-tripping text; nan and inf spelled as Python does."""
    return repr(float(value)) if math.isfinite(value) else str(float(value))


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]],
               comment: Optional[str] = None) -> None:
    buffer = io.StringIO()
    if comment:
        buffer.write("# {}\n".format(comment))
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    Path(path).write_text(buffer.getvalue(), encoding="utf-8")


def _read_csv(path: Path) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as stream:
        lines = [line for line in stream if not line.startswith("#")]
    return list(csv.DictReader(lines))


REPORT_COLUMNS = ("epoch", "train_loss", "val_psnr", "nonzero")
EVAL_COLUMNS = ("sample_id", "psnr_db", "accel", "sigma", "family", "method")
SUMMARY_COLUMNS = (
    "method", "accel", "sigma", "family", "n",
    "mean", "median", "q1", "q3", "min", "max",
)


def write_report(path: Path, reports: Sequence[TrainReport]) -> None:
    """One row per epoch; consecutive reports continue the epoch count."""
    rows = []
    for report in reports:
        for record in report.epochs:
            rows.append(
                (
                    len(rows),
                    format_float(record.train_loss),
                    format_float(record.val_psnr),
                    record.nonzero,
                )
            )
    _write_csv(path, REPORT_COLUMNS, rows)


def read_report(path: Path) -> List[Dict[str, str]]:
    return _read_csv(path)


@define
class EvalRow:
    sample_id: int
    psnr_db: float
    accel: float
    sigma: float
    family: str
    method: str


def write_eval(path: Path, rows: Sequence[EvalRow]) -> None:
    _write_csv(
        path,
        EVAL_COLUMNS,
        (
            (r.sample_id, format_float(r.psnr_db), format_float(r.accel),
             format_float(r.sigma), r.family, r.method)
            for r in rows
        ),
        comment="psnr_convention={}".format(constants.PSNR_CONVENTION),
    )


def read_eval(path: Path) -> List[EvalRow]:
    return [
        EvalRow(
            int(r["sample_id"]), float(r["psnr_db"]), float(r["accel"]),
            float(r["sigma"]), r["family"], r["method"],
        )
        for r in _read_csv(path)
    ]


def write_summary(path: Path, results: Sequence[EvalResult]) -> None:
    rows = []
    for result in results:
        setting = result.setting
        rows.append(
            (
                setting.method, format_float(setting.acceleration),
                format_float(setting.sigma), setting.family, len(result.values),
                format_float(result.mean), format_float(result.median),
                format_float(result.q1), format_float(result.q3),
                format_float(result.minimum), format_float(result.maximum),
            )
        )
    _write_csv(
        path,
        SUMMARY_COLUMNS,
        rows,
        comment="psnr_convention={}".format(constants.PSNR_CONVENTION),
    )


def pgm_bytes(image, peak: float) -> bytes:
    """8-bit binary PGM of |image|, scaled so `peak` maps to 255."""
    if isinstance(image, torch.Tensor):
        image = image.detach().numpy()
    magnitude = np.abs(np.asarray(image))
    if magnitude.ndim != 2:
        raise ContainerError("PGM needs a 2-D image (actual={})".format(magnitude.shape))
    if not peak > 0:
        raise ContainerError("PGM peak must be positive (actual={})".format(peak))
    height, width = magnitude.shape
    pixels = np.clip(np.floor(magnitude / peak * 255.0 + 0.5), 0, 255).astype(np.uint8)
    header = "P5\n{} {}\n255\n".format(width, height).encode("ascii")
    return header + pixels.tobytes(order="C")


def write_pgm(path: Path, image, peak: float) -> None:
    Path(path).write_bytes(pgm_bytes(image, peak))
