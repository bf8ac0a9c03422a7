"""Checkpoint persistence: a single zip archive holding a key-value manifest
plus named raw little-endian arrays with explicit shapes.

Entries are stored uncompressed with frozen timestamps, so save -> load ->
save reproduces the file byte for byte.
"""

import io
import json
import zipfile

import numpy as np
import torch

from .networks import PyramidConfig, PyramidState, build_pyramid

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.txt"
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)

_DTYPES = {"float32": np.float32, "float64": np.float64,
           "int64": np.int64, "uint8": np.uint8}


class CheckpointError(RuntimeError):
    pass


def _config_items(cfg: PyramidConfig):
    return {
        "base_resolution": f"{cfg.base_resolution[0]}x{cfg.base_resolution[1]}",
        "n_scales": cfg.n_scales,
        "base_channels": cfg.base_channels,
        "max_channels": cfg.max_channels,
        "d_base_channels": cfg.d_base_channels,
        "d_max_channels": cfg.d_max_channels,
        "modulation_hidden": cfg.modulation_hidden,
        "num_classes": cfg.num_classes,
        "block_type": cfg.block_type,
        "extra_spade_block": cfg.extra_spade_block,
        "progressive": cfg.progressive,
    }


def _parse_config(items):
    h, w = items["config.base_resolution"].split("x")
    return PyramidConfig(
        base_resolution=(int(h), int(w)),
        n_scales=int(items["config.n_scales"]),
        base_channels=int(items["config.base_channels"]),
        max_channels=int(items["config.max_channels"]),
        d_base_channels=int(items["config.d_base_channels"]),
        d_max_channels=int(items["config.d_max_channels"]),
        modulation_hidden=int(items["config.modulation_hidden"]),
        num_classes=int(items["config.num_classes"]),
        block_type=items["config.block_type"],
        extra_spade_block=items["config.extra_spade_block"] == "True",
        progressive=items["config.progressive"] == "True",
    )


def _collect_arrays(state: PyramidState):
    arrays = {}
    for prefix, module in (("generators", state.generators),
                           ("discriminators", state.discriminators)):
        for name, tensor in module.state_dict().items():
            arrays[f"{prefix}.{name}"] = tensor.detach().cpu().numpy()
    for name, arr in state.extra.get("optim", {}).items():
        arrays[f"optim.{name}"] = np.asarray(arr)
    if "torch_rng" in state.extra:
        arrays["torch_rng"] = np.asarray(state.extra["torch_rng"], dtype=np.uint8)
    return arrays


def save_checkpoint(state: PyramidState, path):
    """Write the archive; optimizer state and RNG snapshots ride along in
    `state.extra` (populated by the trainer)."""
    arrays = _collect_arrays(state)
    lines = [f"format_version={FORMAT_VERSION}", f"seed={state.seed}", f"step={state.step}"]
    for key, value in _config_items(state.cfg).items():
        lines.append(f"config.{key}={value}")
    if "data_rng" in state.extra:
        lines.append(f"data_rng={json.dumps(state.extra['data_rng'], sort_keys=True)}")
    for name, arr in arrays.items():
        shape = ",".join(str(s) for s in arr.shape)
        lines.append(f"array.{name}={arr.dtype.name}:{shape}")
    manifest = "\n".join(lines) + "\n"

    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_STORED) as zf:
        zf.writestr(zipfile.ZipInfo(MANIFEST_NAME, date_time=_ZIP_DATE), manifest)
        for name, arr in arrays.items():
            data = np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
            zf.writestr(zipfile.ZipInfo(f"arrays/{name}", date_time=_ZIP_DATE), data)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path) -> PyramidState:
    """Rebuild the pyramid from the archive. Optimizer/RNG extras are placed
    back into `state.extra` for the trainer to consume."""
    try:
        zf = zipfile.ZipFile(path, "r")
    except (zipfile.BadZipFile, OSError) as exc:
        raise CheckpointError(f"{path} is not a readable checkpoint archive: {exc}") from exc
    with zf:
        try:
            manifest = zf.read(MANIFEST_NAME).decode()
        except KeyError:
            raise CheckpointError(f"{path} has no {MANIFEST_NAME}; not a checkpoint")
        items = {}
        for line in manifest.splitlines():
            if line.strip():
                key, _, value = line.partition("=")
                items[key] = value
        version = int(items.get("format_version", -1))
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"checkpoint format version {version} is not supported (expected {FORMAT_VERSION})"
            )
        cfg = _parse_config(items)
        state = build_pyramid(cfg, seed=int(items["seed"]))
        state.step = int(items["step"])

        arrays = {}
        for key, value in items.items():
            if not key.startswith("array."):
                continue
            name = key[len("array."):]
            dtype_name, _, shape_text = value.partition(":")
            shape = tuple(int(s) for s in shape_text.split(",")) if shape_text else ()
            raw = zf.read(f"arrays/{name}")
            arr = np.frombuffer(raw, dtype=np.dtype(_DTYPES[dtype_name]).newbyteorder("<"))
            arrays[name] = arr.reshape(shape).copy()

        for prefix, module in (("generators", state.generators),
                               ("discriminators", state.discriminators)):
            sd = {}
            for name, arr in arrays.items():
                if name.startswith(prefix + "."):
                    sd[name[len(prefix) + 1:]] = torch.from_numpy(arr)
            module.load_state_dict(sd, strict=True)

        optim = {name[len("optim."):]: arrays[name] for name in arrays if name.startswith("optim.")}
        if optim:
            state.extra["optim"] = optim
        if "torch_rng" in arrays:
            state.extra["torch_rng"] = arrays["torch_rng"]
        if "data_rng" in items:
            state.extra["data_rng"] = json.loads(items["data_rng"])
    return state


# ---------------------------------------------------------------------------
# trainer <-> extra-dict adapters

def optimizer_arrays(optimizer, prefix):
    """Flatten Adam moments into named arrays keyed by parameter index."""
    out = {}
    params = [p for group in optimizer.param_groups for p in group["params"]]
    for i, p in enumerate(params):
        st = optimizer.state.get(p)
        if not st:
            continue
        out[f"{prefix}.{i}.step"] = np.asarray(
            st["step"].detach().cpu().numpy() if torch.is_tensor(st["step"]) else st["step"],
            dtype=np.float32)
        out[f"{prefix}.{i}.exp_avg"] = st["exp_avg"].detach().cpu().numpy()
        out[f"{prefix}.{i}.exp_avg_sq"] = st["exp_avg_sq"].detach().cpu().numpy()
    return out


def restore_optimizer(optimizer, arrays, prefix):
    params = [p for group in optimizer.param_groups for p in group["params"]]
    for i, p in enumerate(params):
        key = f"{prefix}.{i}.step"
        if key not in arrays:
            continue
        optimizer.state[p] = {
            "step": torch.tensor(float(arrays[key])),
            "exp_avg": torch.from_numpy(np.array(arrays[f"{prefix}.{i}.exp_avg"])).to(p.dtype),
            "exp_avg_sq": torch.from_numpy(np.array(arrays[f"{prefix}.{i}.exp_avg_sq"])).to(p.dtype),
        }


def save_trainer(trainer, path):
    state = trainer.state
    optim = {}
    optim.update(optimizer_arrays(trainer.opt_g, "g"))
    optim.update(optimizer_arrays(trainer.opt_d, "d"))
    state.extra["optim"] = optim
    state.extra["torch_rng"] = torch.get_rng_state().numpy()
    save_checkpoint(state, path)


def load_trainer(path, opt_cfg=None, embedder=None):
    from .training import OptimConfig, Trainer

    state = load_checkpoint(path)
    trainer = Trainer(state, opt_cfg or OptimConfig(), embedder=embedder)
    optim = state.extra.get("optim", {})
    restore_optimizer(trainer.opt_g, optim, "g")
    restore_optimizer(trainer.opt_d, optim, "d")
    if "torch_rng" in state.extra:
        torch.set_rng_state(torch.from_numpy(np.array(state.extra["torch_rng"], dtype=np.uint8)))
    return trainer
