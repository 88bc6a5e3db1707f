"""Readers and writers for the workbench's on-disk formats.

A checkpoint is a directory holding ``manifest.json`` and ``weights.bin``:
the weights file is every tensor, in manifest order, flattened row-major as
little-endian float32. Manifest offsets are in bytes.
"""
from collections import OrderedDict
import csv
from dataclasses import dataclass
import hashlib
import json
import logging
import os

import numpy as np
import torch

from .constants import CHECKPOINT_FORMAT
from .data import Vocab
from .exceptions import (
    CheckpointFormatError,
    InputDomainError,
    ModelIntegrityError,
)
from .model.config import ModelConfig
from .model.params import check_params
from .quantizer import Assignment
from .search.trace import SearchTrace


logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
WEIGHTS = "weights.bin"
WEIGHT_DTYPE = "<f4"
WEIGHT_SIZE = 4


@dataclass
class Checkpoint:
    config: ModelConfig
    params: OrderedDict
    vocab: Vocab = None
    assignment: Assignment = None


def weights_bytes(params):
    return b"".join(
        np.ascontiguousarray(
            tensor.detach().cpu().numpy().astype(WEIGHT_DTYPE)
        ).tobytes()
        for tensor in params.values()
    )


def write_checkpoint(path, checkpoint):
    """Write a checkpoint directory; returns the weights' sha256."""
    check_params(checkpoint.params, checkpoint.config)
    os.makedirs(path, exist_ok=True)
    blob = weights_bytes(checkpoint.params)
    digest = hashlib.sha256(blob).hexdigest()

    tensors, offset = [], 0
    for name, tensor in checkpoint.params.items():
        count = tensor.numel()
        tensors.append(
            {
                "name": name,
                "shape": list(tensor.shape),
                "offset": offset,
                "count": count,
            }
        )
        offset += WEIGHT_SIZE * count

    manifest = {
        "format": CHECKPOINT_FORMAT,
        "dtype": WEIGHT_DTYPE,
        "config": checkpoint.config.to_dict(),
        "vocab": checkpoint.vocab.symbols() if checkpoint.vocab else None,
        "assignment": checkpoint.assignment.to_dict()
        if checkpoint.assignment
        else None,
        "tensors": tensors,
        "weights_sha256": digest,
    }
    with open(os.path.join(path, WEIGHTS), "wb") as f:
        f.write(blob)
    write_json(os.path.join(path, MANIFEST), manifest)
    logger.info("Wrote checkpoint %s (%d bytes)", path, len(blob))
    return digest


def read_checkpoint(path):
    """Load a checkpoint directory.

    :raises InputDomainError: if the directory or its files are missing.
    :raises CheckpointFormatError: if the manifest is malformed.
    :raises ModelIntegrityError: if a tensor disagrees with the config.

    """
    manifest_path = os.path.join(path, MANIFEST)
    weights_path = os.path.join(path, WEIGHTS)
    for p in (manifest_path, weights_path):
        if not os.path.exists(p):
            raise InputDomainError(f"Checkpoint file {p} does not exist")

    manifest = read_json(manifest_path)
    if not isinstance(manifest, dict):
        raise CheckpointFormatError(f"{manifest_path} must hold an object")
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointFormatError(
            f"Expected checkpoint format {CHECKPOINT_FORMAT}, "
            f"got {manifest.get('format')!r}"
        )
    try:
        config = ModelConfig.from_dict(manifest["config"])
        tensors = manifest["tensors"]
    except KeyError as e:
        raise CheckpointFormatError(f"Checkpoint manifest lacks {e}")
    if not isinstance(tensors, list):
        raise CheckpointFormatError("Manifest tensors must be a list")

    with open(weights_path, "rb") as f:
        blob = f.read()
    digest = manifest.get("weights_sha256")
    if digest is not None and hashlib.sha256(blob).hexdigest() != digest:
        raise CheckpointFormatError(
            f"{weights_path} does not match the manifest's sha256"
        )
    if len(blob) % WEIGHT_SIZE:
        raise CheckpointFormatError(
            f"{weights_path} is not a whole number of float32 values"
        )
    flat = np.frombuffer(blob, dtype=WEIGHT_DTYPE)

    params = OrderedDict()
    for position, entry in enumerate(tensors):
        name, values = read_tensor(flat, entry, position)
        params[name] = values
    expected = sum(t.numel() for t in params.values())
    if flat.size != expected:
        raise CheckpointFormatError(
            f"{weights_path} holds {flat.size} values, the manifest "
            f"describes {expected}"
        )
    check_params(params, config)

    vocab = manifest.get("vocab")
    assignment = manifest.get("assignment")
    return Checkpoint(
        config=config,
        params=params,
        vocab=Vocab.from_symbols(vocab) if vocab else None,
        assignment=Assignment.from_dict(assignment) if assignment else None,
    )


def read_tensor(flat, entry, position):
    """One manifest entry's ``(name, tensor)`` out of the flat weights."""
    try:
        name = entry["name"]
    except (KeyError, TypeError):
        raise CheckpointFormatError(f"Manifest tensor {position} has no name")
    try:
        start, count = int(entry["offset"]), int(entry["count"])
        shape = [int(n) for n in entry["shape"]]
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointFormatError(f"Manifest entry for {name} is bad: {e}")
    if start < 0 or count < 0 or start % WEIGHT_SIZE:
        raise ModelIntegrityError(
            name, f"Tensor {name} has a bad offset {start} or count {count}"
        )
    if int(np.prod(shape)) != count:
        raise ModelIntegrityError(
            name, f"Tensor {name} has shape {shape} but {count} values"
        )
    first = start // WEIGHT_SIZE
    if first + count > flat.size:
        raise ModelIntegrityError(name, f"Tensor {name} runs past weights.bin")
    values = flat[first : first + count].astype(np.float32)
    return name, torch.from_numpy(values.reshape(shape))


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path):
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise InputDomainError(f"{path} does not exist")
    except json.JSONDecodeError as e:
        raise CheckpointFormatError(f"{path} is not valid JSON: {e}")


def write_assignment(path, assignment):
    write_json(path, assignment.to_dict())


def read_assignment(path):
    return Assignment.from_dict(read_json(path))


def write_trace(path, trace):
    with open(path, "w", encoding="utf-8") as f:
        f.write(trace.to_jsonl())


def read_trace(path):
    try:
        with open(path, encoding="utf-8") as f:
            return SearchTrace.from_jsonl(f.read())
    except FileNotFoundError:
        raise InputDomainError(f"{path} does not exist")


def write_profile_csv(path, profile):
    """``block,bits,metric`` rows."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["block", "bits", "metric"])
        for block, bits, perf in profile.rows():
            writer.writerow([block, bits, repr(perf)])


def read_profile_csv(path):
    """``[(block, bits, metric)]`` in file order."""
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != ["block", "bits", "metric"]:
            raise CheckpointFormatError(f"{path} is not a profile CSV")
        return [
            (row["block"], int(row["bits"]), float(row["metric"]))
            for row in reader
        ]


def write_uniform_csv(path, sweep):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["bits", "metric", "memory_bytes"])
        for bits, perf, mem in sweep.rows():
            writer.writerow([bits, repr(perf), repr(mem)])
