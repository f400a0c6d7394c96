"""High-level estimator with a scikit-learn flavored surface.

`StarRatingClassifier` wraps network construction, batch sampling, and the
training loop behind fit/predict/score so the learning core can be driven
from a few lines of code or swapped into existing model-selection tooling.
Construction only stores hyperparameters; everything learned lives in
trailing-underscore attributes set by `fit`.
"""

import inspect
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .data.attributes import ALL_TASKS, STAR_TASK, attribute_specs
from .data.generate import PairRecord, PanoramaRecord
from .data.splits import SplitManifest
from .evaluation import macro_accuracy, predict_labels
from .model import NetworkConfig, TaskSpec, load_checkpoint, save_checkpoint
from .trainer import ABLATIONS, train


class StarRatingClassifier:
    """Multi-task panorama scorer exposed as a classifier over star labels.

    Parameters mirror the training-loop knobs. `config` names one of the
    ablation presets; `attention` overrides the preset's attention flag
    when not None. Labels are 1-based throughout.
    """

    def __init__(self, config: str = "ours", iterations: int = 1000,
                 seed: int = 0, batch_size: int = 16, val_every: int = 250,
                 val_fraction: float = 0.1, lr_backbone: float = 1e-4,
                 lr_head: float = 1e-3,
                 block_channels: Tuple[int, ...] = (8, 16, 32, 32, 64),
                 mid_channels: int = 128, attention: Optional[bool] = None):
        self.config = config
        self.iterations = iterations
        self.seed = seed
        self.batch_size = batch_size
        self.val_every = val_every
        self.val_fraction = val_fraction
        self.lr_backbone = lr_backbone
        self.lr_head = lr_head
        self.block_channels = block_channels
        self.mid_channels = mid_channels
        self.attention = attention

    # -- scikit-learn plumbing -------------------------------------------

    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return [p for p in sig.parameters if p != "self"]

    def get_params(self, deep: bool = True) -> Dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params) -> "StarRatingClassifier":
        valid = set(self._param_names())
        for key, value in params.items():
            if key not in valid:
                raise ValueError(f"unknown parameter {key!r} for "
                                 f"{type(self).__name__}")
            setattr(self, key, value)
        return self

    def _require_fitted(self):
        if not hasattr(self, "net_"):
            raise RuntimeError("estimator is not fitted; call fit first")

    # -- training ---------------------------------------------------------

    def fit(self, X, y, aux: Optional[Dict[str, Sequence[int]]] = None,
            pairs: Optional[Tuple[np.ndarray, np.ndarray]] = None,
            log_path: Optional[str] = None) -> "StarRatingClassifier":
        """Train on images X (N,H,W,3 floats) and star labels y (1..5).

        `aux` optionally maps auxiliary attribute names to their own
        1-based label arrays; the named tasks get prediction heads and
        feed the multi-task loss. `pairs` is an (A, B) tuple of image
        stacks rendered from the same roads; required when the chosen
        config has a consistency term. Every star class must appear at
        least twice so the weighted loss and the validation split are
        well defined.
        """
        if self.config not in ABLATIONS:
            raise ValueError(f"unknown config {self.config!r}; expected one "
                             f"of {sorted(ABLATIONS)}")
        preset = ABLATIONS[self.config]
        if self.attention is not None:
            from .trainer.loop import AblationConfig
            preset = AblationConfig(preset.name, self.attention, preset.weights)

        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.ndim != 4 or X.shape[3] != 3:
            raise ValueError("X must be N x H x W x 3")
        if y.shape != (X.shape[0],):
            raise ValueError("y must be one label per image")
        if y.min() < 1 or y.max() > 5:
            raise ValueError("star labels must lie in 1..5")
        counts = np.bincount(y, minlength=6)[1:]
        if (counts < 2).any():
            missing = [c + 1 for c in range(5) if counts[c] < 2]
            raise ValueError(f"need at least 2 samples of every star class; "
                             f"short on {missing}")

        tasks, aux_arrays = self._resolve_tasks(preset, aux, X.shape[0])
        records = [
            PanoramaRecord(
                id=f"x{i:05d}", image=X[i].astype(np.float32), lat=0.0,
                lon=0.0, heading=0.0, star=int(y[i]),
                aux={name: int(arr[i]) for name, arr in aux_arrays.items()})
            for i in range(X.shape[0])
        ]
        manifest = self._make_manifest(records)
        pair_records = self._resolve_pairs(preset, pairs)

        h, w = X.shape[1:3]
        net_config = NetworkConfig(
            input_height=h, input_width=w, input_channels=3,
            block_channels=tuple(self.block_channels),
            mid_channels=self.mid_channels)

        result = train(preset, records, manifest, pairs=pair_records,
                       net_config=net_config, tasks=tasks,
                       iterations=self.iterations, seed=self.seed,
                       batch_size=self.batch_size, val_every=self.val_every,
                       lr_backbone=self.lr_backbone, lr_head=self.lr_head,
                       log_path=log_path)
        self.net_ = result.net
        self.classes_ = np.arange(1, 6)
        self.best_val_macro_ = result.best_val_macro
        self.log_rows_ = result.log_rows
        self.aborted_ = result.aborted
        self.class_weights_ = result.class_weights
        return self

    def _resolve_tasks(self, preset, aux, n):
        known = {spec.name: spec for spec in attribute_specs()}
        if aux is None:
            if preset.weights.multitask > 0:
                raise ValueError(
                    f"config {preset.name!r} trains auxiliary heads; pass "
                    "aux labels or pick a star-only config")
            return [STAR_TASK], {}
        arrays = {}
        for name in aux:
            if name not in known or name == "star":
                raise ValueError(f"unknown auxiliary task {name!r}")
            arr = np.asarray(aux[name], dtype=np.int64)
            if arr.shape != (n,):
                raise ValueError(f"aux {name!r} must have one label per image")
            k = known[name].num_classes
            if arr.min() < 1 or arr.max() > k:
                raise ValueError(f"aux {name!r} labels must lie in 1..{k}")
            arrays[name] = arr
        tasks = [STAR_TASK] + [known[n2] for n2 in sorted(arrays)]
        return tasks, arrays

    def _resolve_pairs(self, preset, pairs):
        if pairs is None:
            return ()
        a, b = pairs
        a = np.asarray(a, dtype=np.float32)
        b = np.asarray(b, dtype=np.float32)
        if a.shape != b.shape or a.ndim != 4:
            raise ValueError("pairs must be two equal stacks of images")
        return [PairRecord(id=f"p{i:05d}", image_a=a[i], image_b=b[i],
                           separation_m=1.0) for i in range(a.shape[0])]

    def _make_manifest(self, records) -> SplitManifest:
        rng = np.random.default_rng([self.seed, 41])
        val = []
        train_ids = []
        by_star = {}
        for rec in records:
            by_star.setdefault(rec.star, []).append(rec.id)
        for star in sorted(by_star):
            ids = sorted(by_star[star])
            order = rng.permutation(len(ids))
            n_val = max(1, int(round(self.val_fraction * len(ids))))
            chosen = {ids[i] for i in order[:n_val]}
            val.extend(sorted(chosen))
            train_ids.extend(i for i in ids if i not in chosen)
        return SplitManifest(train_ids=sorted(train_ids), val_ids=sorted(val),
                             test_ids=[], seed=self.seed)

    # -- inference --------------------------------------------------------

    def predict(self, X) -> np.ndarray:
        self._require_fitted()
        return predict_labels(self.net_, np.asarray(X, dtype=np.float64))

    def predict_proba(self, X) -> np.ndarray:
        self._require_fitted()
        return self.net_.predict_proba(np.asarray(X, dtype=np.float64))

    def score(self, X, y) -> float:
        """Macro accuracy as a fraction in [0, 1]."""
        self._require_fitted()
        return macro_accuracy(self.predict(X), np.asarray(y), 5) / 100.0

    # -- persistence ------------------------------------------------------

    def save(self, directory: str):
        self._require_fitted()
        save_checkpoint(self.net_, directory, extra={
            "estimator_params": {k: list(v) if isinstance(v, tuple) else v
                                 for k, v in self.get_params().items()},
            "best_val_macro": self.best_val_macro_,
        })

    @classmethod
    def load(cls, directory: str) -> "StarRatingClassifier":
        net, extra = load_checkpoint(directory)
        params = dict(extra.get("estimator_params", {}))
        if "block_channels" in params:
            params["block_channels"] = tuple(params["block_channels"])
        est = cls(**params)
        est.net_ = net
        est.classes_ = np.arange(1, 6)
        est.best_val_macro_ = extra.get("best_val_macro", float("nan"))
        est.log_rows_ = []
        est.aborted_ = False
        est.class_weights_ = None
        return est
