"""End-to-end experiment: sense, back-project, describe, codebook, encode,
optionally fuse, cross-validate k and evaluate, once per measurement rate.

Artifacts are content-addressed: each file name is a hash of every setting
upstream of it, so a rate sweep or a re-run reuses what it can.  Every file
is written atomically next to a ``.sha256`` sidecar; a file whose sidecar is
missing or disagrees is reported and rebuilt, never reused.
"""

from __future__ import annotations

import contextlib
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import classifier, codebook, dataset, descriptor, sensing
from .bits import n_words
from .config import ExperimentConfig, format_rate
from .errors import ConsistencyError, StageError
from .report import record_line, report_table

log = logging.getLogger(__name__)

STAGES = ("data", "sense", "describe", "codebook", "encode", "classify")


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def digest(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:20]


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write(path, writer) -> None:
    """Run ``writer(tmp_path)`` then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def write_text(path, text: str) -> None:
    atomic_write(path, lambda p: Path(p).write_text(text))


class ArtifactStore:
    """Files under ``root`` named ``<key><suffix>`` with checksum sidecars."""

    def __init__(self, root):
        self.root = Path(root)
        self.flagged: list[str] = []

    def path(self, key: str, suffix: str) -> Path:
        return self.root / f"{key}{suffix}"

    def fetch(self, key: str, suffix: str, loader):
        path = self.path(key, suffix)
        side = path.with_name(path.name + ".sha256")
        if not path.exists():
            return None
        if not side.exists() or side.read_text().strip() != file_sha256(path):
            log.warning("artifact %s is partial or corrupt; rebuilding", path)
            self.flagged.append(str(path))
            return None
        return loader(path)

    def put(self, key: str, suffix: str, saver) -> Path:
        path = self.path(key, suffix)
        atomic_write(path, saver)
        write_text(path.with_name(path.name + ".sha256"), file_sha256(path) + "\n")
        return path

    def cached(self, key: str, suffix: str, loader, build, saver):
        obj = self.fetch(key, suffix, loader)
        if obj is not None:
            log.info("reusing %s", self.path(key, suffix).name)
            return obj
        obj = build()
        self.put(key, suffix, lambda p: saver(obj, p))
        return obj


@dataclass
class RateResult:
    rate: float
    artifacts: dict = field(default_factory=dict)
    reports: list = field(default_factory=list)


class Experiment:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.out = cfg.out_dir
        self.store = ArtifactStore(self.out / "cache")
        self.backend = cfg.get("backend")
        self._data = None
        self._memo = {}
        self.artifacts = {}  # (rate, label) -> file path

    # data
    def data(self):
        if self._data is None:
            with stage("data"):
                c = self.cfg
                full = dataset.load_idx(c.path("data.images"), c.path("data.labels"))
                train, test = dataset.split(full, c.get("data.train_count"), c.get("data.test_count"))
                seed = c.get("seed")
                if c.get("data.train_subsample") is not None:
                    train = dataset.subsample(train, c.get("data.train_subsample"), seed)
                if c.get("data.test_subsample") is not None:
                    test = dataset.subsample(test, c.get("data.test_subsample"), seed)
                self._data = (full, train, test)
        return self._data

    def split_key(self, name: str) -> str:
        full, train, test = self.data()
        part = train if name == "train" else test
        return digest({"data": full.source["sha256"], "index": part.index.tolist()})

    def _cached(self, rate, label, key, suffix, loader, build, saver):
        obj = self.store.cached(key, suffix, loader, build, saver)
        self.artifacts[(rate, label)] = str(self.store.path(key, suffix))
        return obj

    def forget(self):
        self._memo.clear()

    def _once(self, key, build):
        if key not in self._memo:
            self._memo[key] = build()
        return self._memo[key]

    # sensing
    def matrix(self, rate: float):
        return self._once(("matrix", rate), lambda: self._matrix(rate))

    def _matrix(self, rate: float):
        full, _, _ = self.data()
        n = full.height * full.width
        with stage("sense"):
            path = self.cfg.path("sensing.matrix", rate)
            if path is not None:
                psi = sensing.load_matrix(path)
                if psi.n != n:
                    raise ConsistencyError(f"{path}: matrix has n={psi.n}, images have {n} pixels")
                self.artifacts[(rate, "matrix")] = str(path)
                return psi, digest({"loaded": file_sha256(path)})
            m = sensing.measurement_count(rate, n)
            seed = self.cfg.get("seed")
            key = digest({"m": m, "n": n, "seed": seed})
            psi = self._cached(rate, "matrix", key, ".psimat", sensing.load_matrix,
                                    lambda: sensing.generate_matrix(m, n, seed),
                                    sensing.save_matrix)
            # reloaded matrices carry file provenance; restore the generating one
            return sensing.MeasurementMatrix(psi.entries, {"kind": "random", "seed": seed}), key

    def sensing_kind(self) -> str:
        return "random" if self.cfg.get("sensing.matrix") is None else "loaded"

    # descriptors
    def scale_config(self) -> descriptor.ScaleConfig:
        d = self.cfg.get("descriptor")
        counts = d["coeff_counts"]
        return descriptor.ScaleConfig(tuple(d["block_sizes"]), None if counts is None else tuple(counts),
                                      d["energy_level"])

    def descriptors(self, rate: float, name: str):
        return self._once(("descriptors", rate, name), lambda: self._descriptors(rate, name))

    def _descriptors(self, rate: float, name: str):
        psi, mkey = self.matrix(rate)
        scfg = self.scale_config()
        stride = self.cfg.get("descriptor.stride")
        key = digest({"matrix": mkey, "split": self.split_key(name), "scales": scfg.to_dict(),
                      "stride": stride})

        def build():
            _, train, test = self.data()
            part = train if name == "train" else test
            grid = descriptor.KeypointGrid.regular(part.height, part.width, stride)
            words = np.empty((len(part), len(grid), n_words(scfg.n_bits)), dtype=np.uint64)
            for s in range(0, len(part), 256):
                proxies = sensing.proxies(part.images[s:s + 256], psi)
                words[s:s + 256] = descriptor.describe_batch(proxies, grid, scfg)
            log.info("described %d %s proxies at MR=%s", len(part), name, format_rate(rate))
            return words

        with stage("describe"):
            words = self._cached(rate, f"{name}_descriptors", key, f".{name}.mbdct",
                                      lambda p: descriptor.load_descriptor_cache(p)[0], build,
                                      lambda w, p: descriptor.save_descriptor_cache(w, scfg, p))
        return words, key

    # dictionary
    def codebook(self, rate: float):
        return self._once(("codebook", rate), lambda: self._codebook(rate))

    def _codebook(self, rate: float):
        words, dkey = self.descriptors(rate, "train")
        d = self.cfg.get("dictionary")
        seed = self.cfg.get("seed")
        key = digest({"descriptors": dkey, "dictionary": d, "seed": seed})
        n_bits = self.scale_config().n_bits

        def build():
            rng = np.random.default_rng(seed)
            pick = np.sort(rng.choice(len(words), min(d["sample_size"], len(words)), replace=False))
            sample = words[pick].reshape(-1, words.shape[2])
            return codebook.kmeans_hamming(sample, d["k"], seed=seed, max_iters=d["max_iters"],
                                           n_bits=n_bits, backend=self.backend)

        with stage("codebook"):
            cb = self._cached(rate, "codebook", key, ".cbook", codebook.load_codebook, build,
                              codebook.save_codebook)
        return cb, key

    # features
    def bow(self, rate: float, name: str):
        cb, ckey = self.codebook(rate)
        words, dkey = self.descriptors(rate, name)
        key = digest({"codebook": ckey, "descriptors": dkey})
        with stage("encode"):
            return self._cached(rate, f"{name}_features", key, f".{name}.feat", codebook.load_feature_matrix,
                                     lambda: codebook.encode_bow_batch(words, cb, backend=self.backend),
                                     codebook.save_features)

    def external(self, rate: float, name: str):
        path = self.cfg.path("features", rate)
        if path is None:
            return None
        full, train, test = self.data()
        with stage("encode"):
            ext = codebook.load_feature_matrix(path)
            if len(ext) != len(full):
                raise ConsistencyError(f"{path}: {len(ext)} feature rows for {len(full)} images")
            part = train if name == "train" else test
            return ext[part.index]

    def feature_sets(self, rate: float) -> dict:
        return self._once(("features", rate), lambda: self._feature_sets(rate))

    def _feature_sets(self, rate: float) -> dict:
        sets = {"bow": (self.bow(rate, "train"), self.bow(rate, "test"))}
        ext_tr, ext_te = self.external(rate, "train"), self.external(rate, "test")
        if ext_tr is not None:
            sets["external"] = (ext_tr, ext_te)
            with stage("encode"):
                sets["fused"] = (codebook.fuse_matrix(sets["bow"][0], ext_tr),
                                 codebook.fuse_matrix(sets["bow"][1], ext_te))
        return sets

    # classification
    def classify(self, rate: float) -> list:
        _, train, test = self.data()
        psi, _ = self.matrix(rate)
        scfg = self.scale_config()
        c = self.cfg
        reports = []
        for kind, (x_tr, x_te) in self.feature_sets(rate).items():
            with stage("classify"):
                ks = [k for k in c.get("classifier.k_grid")]
                errs = classifier.cross_validation_errors(x_tr, train.labels, ks, c.get("classifier.folds"),
                                                          c.get("seed"), backend=self.backend)
                k = classifier.best_k(errs)
                n_classes = int(max(train.labels.max(), test.labels.max())) + 1
                model = classifier.KnnModel(x_tr, train.labels, k, n_classes=n_classes)
                meta = {
                    "rate": float(rate),
                    "m": psi.m,
                    "sensing": self.sensing_kind(),
                    "energy_level": scfg.energy_level,
                    "coeff_counts": list(scfg.coeff_counts),
                    "stride": c.get("descriptor.stride"),
                    "codebook_k": c.get("dictionary.k"),
                    "kind": kind,
                    "k": k,
                    "cv_errors": {str(kk): e for kk, e in errs.items()},
                    "seed": c.get("seed"),
                    "n_train": len(train),
                    "n_test": len(test),
                    "data_sha256": train.source["sha256"],
                }
                rep = classifier.evaluate(model, x_te, test.labels, meta, backend=self.backend)
                log.info("MR=%s %s: k=%d error %.2f%%", format_rate(rate), kind, k, 100 * rep.error_rate)
                reports.append(rep)
        return reports

    def run_rate(self, rate: float, until: str = "classify") -> RateResult:
        if until not in STAGES:
            raise ValueError(f"unknown stage {until!r}")
        steps = {
            "data": self.data,
            "sense": lambda: self.matrix(rate),
            "describe": lambda: [self.descriptors(rate, n) for n in ("train", "test")],
            "codebook": lambda: self.codebook(rate),
            "encode": lambda: self.feature_sets(rate),
        }
        for name in STAGES[: STAGES.index(until) + 1]:
            if name in steps:
                steps[name]()
        res = RateResult(rate)
        if until == "classify":
            res.reports = self.classify(rate)
        res.artifacts = {label: p for (r, label), p in self.artifacts.items() if r == rate}
        return res


def write_reports(reports, out_dir) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    jsonl = out_dir / "reports.jsonl"
    table = out_dir / "report.txt"
    write_text(jsonl, "".join(record_line(r) + "\n" for r in reports))
    write_text(table, report_table(reports))
    return jsonl, table


def run_stages(cfg: ExperimentConfig, until: str = "classify") -> list[RateResult]:
    """Run every configured rate through stage ``until``."""
    with stage("config"):
        cfg.validate()
    exp = Experiment(cfg)
    exp.out.mkdir(parents=True, exist_ok=True)
    write_text(exp.out / "config.json", cfg.to_json() + "\n")
    results = []
    for rate in cfg.rates:
        results.append(exp.run_rate(rate, until))
        exp.forget()  # descriptors of one rate can be large; keep one rate in memory
    if until == "classify":
        write_reports([r for res in results for r in res.reports], exp.out)
    return results


def run_experiment(cfg: ExperimentConfig) -> list:
    """All stages for every rate; writes reports.jsonl and report.txt and
    returns the EvalReports in rate order."""
    return [r for res in run_stages(cfg) for r in res.reports]
