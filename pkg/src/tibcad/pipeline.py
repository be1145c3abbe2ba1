"""Pipeline stages: segmentation, candidate selection, gated feature
extraction, detector training, scoring and feature-set comparison."""
import dataclasses
import logging
import os
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import ndimage

from tibcad import bscale, evaluation, fcseg, phantom, svm
from tibcad import general as gen
from tibcad import shapefeat, texfeat, visualization, volio
from tibcad.config import check_feature_mode, check_patch_size
from tibcad.exceptions import (DataError, DegenerateStatisticsError,
                               MissingFileError, SchemaError, StageError,
                               TibCadError)

logger = logging.getLogger(__name__)

META_COLUMNS = ("scan_id", "z", "x0", "y0", "label")


@dataclass(frozen=True)
class Scan:
    """One manifest entry; empty lungs/tib when not available"""
    scan_id: str
    volume: str
    lungs: str = ""
    tib: str = ""


def read_manifest(path):
    """Reads 'scan_id volume lungs tib' lines; '-' marks a missing file
    and relative paths are taken relative to the manifest"""
    if not os.path.exists(path):
        raise MissingFileError(f"manifest not found: {path}")
    base = os.path.dirname(os.path.abspath(path))

    def resolve(name):
        if name == "-":
            return ""
        return name if os.path.isabs(name) else os.path.join(base, name)

    scans = []
    with open(path, "r") as f:
        for number, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if not 2 <= len(parts) <= 4:
                raise DataError(f"{path}:{number}: expected 'scan_id volume "
                                f"[lungs [tib]]', got {line!r}")
            parts += ["-"] * (4 - len(parts))
            scans.append(Scan(parts[0], *(resolve(p) for p in parts[1:])))
    ids = [s.scan_id for s in scans]
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: duplicate scan ids")
    if not scans:
        raise DataError(f"{path}: manifest lists no scans")
    return scans


def write_manifest(path, scans):
    base = os.path.dirname(os.path.abspath(path))

    def relative(name):
        return os.path.relpath(name, base) if name else "-"

    with open(path, "w") as f:
        f.write("# scan_id volume lungs tib\n")
        for s in scans:
            f.write(f"{s.scan_id} {relative(s.volume)} {relative(s.lungs)} "
                    f"{relative(s.tib)}\n")


class StageCache:
    """Stores stage outputs under a content hash of their inputs and
    parameters; a cache without directory stores nothing"""

    def __init__(self, directory=None):
        self.directory = directory or None
        if self.directory:
            os.makedirs(self.directory, exist_ok=True)

    @staticmethod
    def key(stage, *parts):
        return gen.content_digest(stage, *parts)

    def _path(self, stage, key):
        return os.path.join(self.directory, f"{stage}-{key}.hdr")

    def fetch(self, stage, key, reader):
        if not self.directory:
            return None
        path = self._path(stage, key)
        if not os.path.exists(path):
            logger.debug("Cache miss for %s %s", stage, key[:12])
            return None
        logger.debug("Cache hit for %s %s", stage, key[:12])
        return reader(path)

    def store(self, stage, key, writer, value):
        if self.directory:
            writer(self._path(stage, key), value)
        return value


def segment_stage(volume, params=None, cache=None):
    """Lung mask of a volume"""
    params = params or fcseg.SegmentationParams()
    cache = cache or StageCache()
    key = cache.key("segment", volio.volume_digest(volume), params)
    cached = cache.fetch("segment", key, volio.read_mask)
    if cached is not None:
        return cached
    lungs, _, _ = fcseg.segment_lungs(volume, params)
    return cache.store("segment", key, volio.write_mask, lungs)


def candidate_stage(volume, lung_mask, params=None, cache=None):
    """Ball-scale candidate mask of a volume"""
    params = params or bscale.BScaleParams()
    cache = cache or StageCache()
    key = cache.key("bscale", volio.volume_digest(volume), lung_mask.bits,
                    params.intensity_tol, params.fraction_threshold,
                    params.r_max, params.use_3d)
    scale_map = cache.fetch("bscale", key, volio.read_scale_map)
    if scale_map is None:
        scale_map = cache.store("bscale", key, volio.write_scale_map,
                                bscale.bscale_map(volume, lung_mask, params))
    return bscale.candidates(scale_map, params)


@dataclass(frozen=True, eq=False)
class PreparedScan:
    scan_id: str
    patches: list
    labels: np.ndarray
    lungs: volio.Mask
    candidates: volio.Mask
    tib: volio.Mask


def prepare_scan(scan, config, cache=None):
    """Reads, segments, selects candidates, tiles and labels one scan"""
    volume = volio.read_volume(scan.volume)
    with gen.timed(f"Preparing scan {scan.scan_id}", logger):
        lungs = segment_stage(volume, config.segmentation, cache)
        candidates = candidate_stage(volume, lungs, config.bscale, cache)
        patches = volio.tile_patches(volume, lungs, config.patch_size)
        if scan.tib:
            tib = volio.read_mask(scan.tib)
            volio.check_same_dims(volume, tib, "TIB mask")
        else:
            tib = volio.Mask.like(volume, np.zeros(volume.shape, bool))
        labels = phantom.label_patches(patches, tib, config.tau)

    return PreparedScan(scan.scan_id, patches, labels, lungs, candidates,
                        tib)


def mode_blocks(mode):
    check_feature_mode(mode)
    return tuple(mode.split("+"))


def feature_names(mode, patch_size):
    names = []
    for block in mode_blocks(mode):
        if block == "shape":
            names += shapefeat.SHAPE_FEATURE_NAMES
        elif block == "glcm":
            names += texfeat.GLCM_FEATURE_NAMES
        else:
            names += texfeat.wavelet_feature_names(patch_size)
    return tuple(names)


def patch_curvatures(patch, config):
    """Lung-filled patch with its Hessian field and curvature maps"""
    patch = patch.lung_filled()
    field = shapefeat.hessian_eigen(patch, config.shape.sigma)
    return patch, field, shapefeat.curvature_maps(field)


def texture_blocks(patch, config, blocks):
    """Texture feature vectors of a lung-filled patch"""
    texture = config.texture
    out = {}
    if "glcm" in blocks:
        out["glcm"] = texfeat.glcm_features(texfeat.glcm(
            patch, texture.levels, texture.offsets, texture.hu_lo,
            texture.hu_hi))
    if "wavelet" in blocks:
        out["wavelet"] = texfeat.steerable_features(patch,
                                                    texture.wavelet_sigma)
    return out


def patch_features(patch, gate, config, blocks):
    """Feature blocks of one patch, or None when the gate skips it

    Pixels outside the lungs are filled before any filtering. The gate
    decision always comes from the shape block, so every feature mode
    scores the same patches.
    """
    filled, field, maps = patch_curvatures(patch, config)
    shape = shapefeat.shape_vector(patch, field, maps, gate, config.shape)
    if shape is None:
        return None
    out = {"shape": shape}
    out.update(texture_blocks(filled, config, blocks))
    return out


@dataclass(frozen=True, eq=False)
class PatchRecords:
    """Energy-band independent extraction results of the labelled
    patches of several scans

    Shape aggregates depend on the energy band, so curvatures are kept
    per patch and shape rows are computed per gate. Texture blocks do not
    depend on it and are stored as finished rows.

    Parameters:
    -----------
    meta : pd.DataFrame
        META_COLUMNS of every recorded patch
    patches, fields, maps : list
        Patch, HessianField and CurvatureMaps per recorded patch
    texture : dict(str, np.array)
        (n_records, d) rows per texture block
    tib_w : dict(str, list(np.array))
        W at the TIB pixels of every abnormal patch, by scan id
    n_labelled : int
        Labelled patches, including those without candidate voxels which
        are not recorded when gating is enabled
    gating : bool
    patch_size : int
    """
    meta: pd.DataFrame
    patches: list
    fields: list
    maps: list
    texture: dict
    tib_w: dict
    n_labelled: int
    gating: bool
    patch_size: int

    @property
    def scan_ids(self):
        return tuple(self.tib_w)


def extract_records(prepared, config, blocks):
    """Curvatures and texture rows of the labelled patches of prepared
    scans

    With gating enabled, patches without any candidate voxel are left
    out here since no energy band can bring them back.
    """
    wanted = [b for b in ("glcm", "wavelet") if b in blocks]
    meta, patches, fields, maps = [], [], [], []
    texture = {b: [] for b in wanted}
    tib_w = {}
    n_labelled = 0
    for scan in prepared:
        tib_w[scan.scan_id] = []
        for patch, label in zip(scan.patches, scan.labels):
            if label < 0:
                continue
            n_labelled += 1
            filled, field, curvature = patch_curvatures(patch, config)
            if label == 1:
                tib_w[scan.scan_id].append(
                    curvature.W[patch.window(scan.tib.bits)])
            if config.gating and \
                    not patch.window(scan.candidates.bits).any():
                continue
            meta.append((scan.scan_id, patch.z, patch.x0, patch.y0,
                         int(label)))
            patches.append(patch)
            fields.append(field)
            maps.append(curvature)
            for block, vector in texture_blocks(
                    filled, config, wanted).items():
                texture[block].append(vector)

    for block in wanted:
        width = len(feature_names(block, config.patch_size))
        texture[block] = np.array(texture[block],
                                  dtype=np.float64).reshape(-1, width)
    return PatchRecords(
        meta=pd.DataFrame(meta, columns=list(META_COLUMNS)),
        patches=patches, fields=fields, maps=maps, texture=texture,
        tib_w=tib_w, n_labelled=n_labelled, gating=config.gating,
        patch_size=config.patch_size)


def scan_records(scans, config, modes=None, cache=None):
    """Prepares every scan and extracts the records all modes need"""
    modes = tuple(dict.fromkeys(modes or (config.feature_mode,)))
    blocks = {b for mode in modes for b in mode_blocks(mode)}
    prepared = [prepare_scan(s, config, cache) for s in scans]
    return extract_records(prepared, config, blocks)


def learn_energy_gate(records, config, scan_ids=None):
    """Energy band from W at the TIB pixels of the abnormal patches

    Parameters:
    -----------
    records : PatchRecords
    config : PipelineConfig
    scan_ids : collection(str) (optional)
        Only these scans contribute; defaults to every recorded scan
    """
    samples = [w for scan_id, arrays in records.tib_w.items()
               if scan_ids is None or scan_id in scan_ids
               for w in arrays]
    if not samples:
        raise DataError("no abnormal patches to learn the energy gate from")
    return shapefeat.fit_energy_gate(np.concatenate(samples),
                                     config.shape.gate_percentiles)


def shape_rows(records, gate, config):
    """Shape rows of the records under an energy band

    Returns:
    --------
    keep : np.array(bool)
        Records the band keeps; all of them when gating is disabled
    rows : np.array
        (keep.sum(), 8) shape features of the kept records
    """
    band = dataclasses.replace(gate, candidates=None,
                               enabled=records.gating)
    keep = np.zeros(len(records.patches), dtype=bool)
    rows = []
    for k, (patch, field, maps) in enumerate(zip(records.patches,
                                                 records.fields,
                                                 records.maps)):
        vector = shapefeat.shape_vector(patch, field, maps, band,
                                        config.shape)
        if vector is not None:
            keep[k] = True
            rows.append(vector)
    width = len(shapefeat.SHAPE_FEATURE_NAMES)
    return keep, np.array(rows, dtype=np.float64).reshape(-1, width)


def records_table(records, mode, shape):
    """Feature table of one mode from shape_rows output"""
    keep, rows = shape
    blocks = []
    for block in mode_blocks(mode):
        blocks.append(rows if block == "shape"
                      else records.texture[block][keep])
    names = feature_names(mode, records.patch_size)
    features = pd.DataFrame(np.hstack(blocks), columns=list(names))
    return pd.concat([records.meta[keep].reset_index(drop=True), features],
                     axis=1)


class FoldGating:
    """Feature rows per cross-validation fold, with the energy band
    learned from the training scans of that fold only

    Bands and shape rows are cached by training set, so feature modes
    evaluated with the same folds share them.
    """

    def __init__(self, records, config):
        self.records = records
        self.config = config
        self._shape = {}

    def gate(self, train_scans):
        return self._rows(train_scans)[0]

    def _rows(self, train_scans):
        key = frozenset(train_scans)
        if key not in self._shape:
            gate = learn_energy_gate(self.records, self.config, key)
            self._shape[key] = (gate, shape_rows(self.records, gate,
                                                 self.config))
        return self._shape[key]

    def fold_table(self, mode):
        """Callable mapping training scan ids to the mode's rows"""
        mode_blocks(mode)

        def rows(train_scans):
            _, shape = self._rows(train_scans)
            return records_table(self.records, mode, shape)
        return rows


@dataclass(frozen=True, eq=False)
class FeatureTables:
    """Per-mode feature tables sharing rows and gate"""
    tables: dict
    names: dict
    gate: shapefeat.EnergyGate
    n_patches: int
    n_skipped: int
    records: PatchRecords = None


def build_feature_table(scans, config, modes=None, gate=None, cache=None):
    """Extracts labelled feature rows of every scan for several modes

    Parameters:
    -----------
    scans : list(Scan)
    config : PipelineConfig
    modes : sequence(str) (optional)
        Defaults to config.feature_mode
    gate : EnergyGate (optional)
        Learned from the TIB pixels of the scans when not given
    cache : StageCache (optional)

    Returns:
    --------
    tables : FeatureTables
        Columns scan_id, z, x0, y0, label and the mode's feature names.
        Ambiguous patches are left out.
    """
    modes = tuple(dict.fromkeys(modes or (config.feature_mode,)))
    records = scan_records(scans, config, modes, cache)
    if gate is None:
        if any(records.tib_w.values()):
            gate = learn_energy_gate(records, config)
        elif config.gating:
            raise DataError("no abnormal patches to learn the energy gate "
                            "from")
        else:
            gate = shapefeat.EnergyGate()

    shape = shape_rows(records, gate, config)
    kept = records.meta[shape[0]]
    for scan_id in records.scan_ids:
        n_scan = int((kept["scan_id"] == scan_id).sum())
        logger.info("Scan %s: %d patches kept after gating", scan_id, n_scan)
    n_skipped = records.n_labelled - int(shape[0].sum())

    tables = {mode: records_table(records, mode, shape) for mode in modes}
    names = {mode: feature_names(mode, config.patch_size) for mode in modes}
    return FeatureTables(tables, names, dataclasses.replace(gate,
                                                            candidates=None),
                         records.n_labelled, n_skipped, records)


def schema_path(csv_path):
    return os.path.splitext(csv_path)[0] + ".schema"


def write_feature_table(path, table, names, meta=None):
    """Writes the CSV and, next to it, the schema file listing the
    feature order preceded by '# key: value' metadata"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    table.to_csv(path, index=False)
    entries = dict(meta or {})
    entries["schema_hash"] = svm.schema_hash(names)
    with open(schema_path(path), "w") as f:
        for key, value in entries.items():
            f.write(f"# {key}: {value}\n")
        f.write("".join(f"{name}\n" for name in names))
    logger.info("Wrote %d feature rows to %s", len(table), path)


def read_feature_table(path):
    """Reads a feature CSV and its schema

    Returns:
    --------
    table : pd.DataFrame
    names : tuple(str)
    meta : dict
    """
    for filename in (path, schema_path(path)):
        if not os.path.exists(filename):
            raise MissingFileError(f"file not found: {filename}")
    meta, names = {}, []
    with open(schema_path(path), "r") as f:
        for line in f:
            line = line.strip()
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
            elif line:
                names.append(line)
    names = tuple(names)
    if meta.get("schema_hash", svm.schema_hash(names)) != \
            svm.schema_hash(names):
        raise SchemaError(f"{schema_path(path)}: schema hash mismatch")

    table = pd.read_csv(path, float_precision="round_trip",
                        dtype={"scan_id": str})
    missing = [c for c in META_COLUMNS + names if c not in table.columns]
    if missing:
        raise SchemaError(f"{path}: columns {missing[:5]} missing")
    return table, names, meta


def table_meta(mode, patch_size, gate):
    return {"mode": mode, "patch_size": patch_size,
            "energy_gate": gen.format_floats((gate.w_lo, gate.w_hi))}


def gate_from_meta(meta):
    if "energy_gate" not in meta:
        return None
    w_lo, w_hi = gen.parse_floats(meta["energy_gate"])
    return shapefeat.EnergyGate(float(w_lo), float(w_hi))


def train_detector(table, names, config, gate=None, mode=None):
    """Trains the SVM on all labelled rows and fixes the operating
    threshold on the training ROC at the configured specificity"""
    labelled = table[table["label"] >= 0]
    X = labelled[list(names)].to_numpy(dtype=np.float64)
    y = labelled["label"].to_numpy()
    model = svm.train(X, y, config.svm, names)
    curve = evaluation.roc(svm.decision_many(model, X), y)
    threshold = evaluation.threshold_for_specificity(
        curve, config.evaluation.specificity)
    logger.info("Operating threshold %.6g for specificity %.2f", threshold,
                config.evaluation.specificity)
    return dataclasses.replace(
        model, threshold=threshold,
        energy_gate=None if gate is None else (gate.w_lo, gate.w_hi),
        feature_mode=mode or config.feature_mode,
        patch_size=config.patch_size)


def side_masks(lung_mask):
    """Splits the lungs at the x midpoint between the centroids of the
    two largest components

    Returns:
    --------
    left, right : np.array(bool)
        Radiological convention: the patient's left lung has the larger
        x
    """
    bits = lung_mask.bits
    nx = lung_mask.dims[0]
    labels, n = ndimage.label(bits)
    split = nx / 2
    if n >= 2:
        sizes = np.bincount(labels.ravel())[1:]
        largest = np.argsort(-sizes, kind="stable")[:2] + 1
        centres = [np.nonzero(labels == k)[2].mean() for k in largest]
        split = sum(centres) / 2
    x = np.arange(nx)[None, None, :]
    return bits & (x >= split), bits & (x < split)


@dataclass(frozen=True, eq=False)
class DetectionReport:
    scan: str
    feature_mode: str
    patch_size: int
    threshold: float
    n_patches: int
    n_scored: int
    n_detected: int
    tib_burden: float
    tib_burden_left: float
    tib_burden_right: float
    scores: pd.DataFrame

    @property
    def n_skipped(self):
        return self.n_patches - self.n_scored

    def to_text(self):
        lines = [f"scan: {self.scan}",
                 f"feature_mode: {self.feature_mode}",
                 f"patch_size: {self.patch_size}",
                 f"threshold: {self.threshold!r}",
                 f"patches: {self.n_patches}",
                 f"scored: {self.n_scored}",
                 f"skipped: {self.n_skipped}",
                 f"detected: {self.n_detected}",
                 f"tib_burden: {self.tib_burden:.6f}",
                 f"tib_burden_left: {self.tib_burden_left:.6f}",
                 f"tib_burden_right: {self.tib_burden_right:.6f}"]
        return "\n".join(lines) + "\n"


def _stage(name, function, *args, **kwargs):
    try:
        return function(*args, **kwargs)
    except TibCadError as e:
        raise StageError(name, e) from e


def _fraction(part, whole):
    n = np.count_nonzero(whole)
    return float(np.count_nonzero(part & whole) / n) if n else 0.0


def score_volume(volume, model, config, cache=None):
    """Segments, gates and scores one volume

    Returns:
    --------
    report : DetectionReport
    overlay : Mask
        Windows of the patches scored at or above the model threshold
    """
    mode = model.feature_mode or config.feature_mode
    n = model.patch_size or config.patch_size
    check_patch_size(n)
    names = feature_names(mode, n)
    if svm.schema_hash(names) != model.schema_hash:
        raise StageError("score", SchemaError(
            f"model schema does not match mode {mode!r} at patch size {n}"))
    config = dataclasses.replace(config, patch_size=n, feature_mode=mode)

    lungs = _stage("segment", segment_stage, volume, config.segmentation,
                   cache)
    candidates = _stage("candidates", candidate_stage, volume, lungs,
                        config.bscale, cache)
    band = model.energy_gate or (0.0, np.inf)
    gate = shapefeat.EnergyGate(band[0], band[1], candidates, config.gating)

    def extract():
        patches = volio.tile_patches(volume, lungs, n)
        blocks = set(mode_blocks(mode))
        kept, vectors = [], []
        for patch in patches:
            features = patch_features(patch, gate, config, blocks)
            if features is not None:
                kept.append(patch)
                vectors.append(np.concatenate([features[b]
                                               for b in mode_blocks(mode)]))
        return patches, kept, vectors

    patches, kept, vectors = _stage("features", extract)
    logger.info("%d of %d patches skipped by gating",
                len(patches) - len(kept), len(patches))

    def score():
        if not kept:
            return np.zeros(0)
        return svm.decision_many(model, np.vstack(vectors), names)

    scores = _stage("score", score)
    detected = scores >= model.threshold
    overlay = np.zeros(volume.shape, dtype=bool)
    for patch, hit in zip(kept, detected):
        if hit:
            overlay[patch.z, patch.y0:patch.y0 + n, patch.x0:patch.x0 + n] \
                = True
    left, right = side_masks(lungs)
    table = pd.DataFrame({"z": [p.z for p in kept],
                          "x0": [p.x0 for p in kept],
                          "y0": [p.y0 for p in kept],
                          "score": scores,
                          "detected": detected.astype(int)})

    report = DetectionReport(
        scan="", feature_mode=mode, patch_size=n,
        threshold=float(model.threshold), n_patches=len(patches),
        n_scored=len(kept), n_detected=int(detected.sum()),
        tib_burden=_fraction(overlay, lungs.bits),
        tib_burden_left=_fraction(overlay, left),
        tib_burden_right=_fraction(overlay, right),
        scores=table)
    return report, volio.Mask.like(volume, overlay)


def run_pipeline(config, cache=None):
    """Scores config.input with config.model and writes the score table,
    overlay mask and report under config.output_prefix"""
    cache = cache or StageCache(config.cache_dir)
    volume = _stage("read", volio.read_volume, config.input)
    model = _stage("score", svm.load_model, config.model)
    with gen.timed(f"Scoring {config.input}", logger):
        report, overlay = score_volume(volume, model, config, cache)
    report = dataclasses.replace(report, scan=config.input)

    prefix = config.output_prefix
    _stage("report", write_detection_report, prefix, report, overlay)
    return report


def write_detection_report(prefix, report, overlay):
    directory = os.path.dirname(prefix)
    if directory:
        os.makedirs(directory, exist_ok=True)
    report.scores.to_csv(f"{prefix}_scores.csv", index=False)
    volio.write_mask(f"{prefix}_overlay.hdr", overlay)
    with open(f"{prefix}_report.txt", "w") as f:
        f.write(report.to_text())


@dataclass(frozen=True, eq=False)
class EvaluationSummary:
    """Repeated cross-validation of one feature table"""
    mode: str
    patch_size: int
    dimension: int
    n_tib: int
    n_normal: int
    results: list

    @property
    def az(self):
        return float(np.mean([r.roc.auc for r in self.results]))

    @property
    def fold_aucs(self):
        return evaluation.fold_aucs(self.results)


def evaluate_table(table, names, config, mode=None, patch_size=None,
                   fold_table=None):
    """Repeated cross-validation of a feature table

    With fold_table, table only needs scan_id and label and supplies the
    scan classes; the rows of each fold come from fold_table.
    """
    labelled = table[table["label"] >= 0].reset_index(drop=True)
    results = evaluation.repeated_crossval(labelled, names, config.svm,
                                           config.evaluation, fold_table)
    return EvaluationSummary(
        mode=mode or config.feature_mode,
        patch_size=patch_size or config.patch_size,
        dimension=len(names),
        n_tib=int((labelled["label"] == 1).sum()),
        n_normal=int((labelled["label"] == 0).sum()),
        results=results)


def evaluate_scans(scans, config, mode=None, cache=None):
    """Repeated cross-validation of one feature mode on the scans of a
    manifest, learning the energy band inside every training fold"""
    mode = mode or config.feature_mode
    with gen.timed(f"Extracting {mode} features", logger):
        records = scan_records(scans, config, (mode,), cache)
    gating = FoldGating(records, config)
    return evaluate_table(records.meta,
                          feature_names(mode, config.patch_size), config,
                          mode, config.patch_size, gating.fold_table(mode))


def az_grid(summaries):
    """Table of Az per feature set and patch size"""
    return pd.DataFrame(
        [{"feature_set": s.mode, "dimension": s.dimension,
          "patch_size": s.patch_size, "n_tib": s.n_tib,
          "n_normal": s.n_normal, "az": s.az,
          "az_std": float(np.std([r.roc.auc for r in s.results]))}
         for s in summaries])


def pvalue_matrix(summaries):
    """Paired t-test p-values between the per-fold AUCs of every pair of
    summaries; 'degenerate' where the differences have no variance"""
    labels = [s.mode for s in summaries]
    matrix = pd.DataFrame(index=labels, columns=labels, dtype=object)
    for i, a in enumerate(summaries):
        for j, b in enumerate(summaries):
            try:
                _, p = evaluation.paired_ttest(a.fold_aucs, b.fold_aucs)
                matrix.iat[i, j] = p
            except DegenerateStatisticsError:
                matrix.iat[i, j] = "degenerate"
                if i != j:
                    warnings.warn(f"degenerate t-test between {a.mode} and "
                                  f"{b.mode}")
    return matrix


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    grid: pd.DataFrame
    pvalues: dict
    summaries: list

    def to_text(self):
        parts = ["Accuracy (Az) per feature set and patch size",
                 self.grid.to_string(index=False), ""]
        for n, matrix in self.pvalues.items():
            parts += [f"Paired t-test p-values, {n}x{n} patches",
                      "(pairs: per-fold Az of cross-validation runs sharing "
                      "seed and fold)",
                      matrix.to_string(), ""]
        return "\n".join(parts)


def compare_feature_sets(scans, config, modes, patch_sizes=None,
                         cache=None):
    """Cross-validates every feature mode at every patch size

    Parameters:
    -----------
    scans : list(Scan)
    config : PipelineConfig
    modes : sequence(str)
        At least two modes; a mode may be listed twice
    patch_sizes : sequence(int) (optional)
        Defaults to config.patch_size

    Returns:
    --------
    report : ComparisonReport
    """
    modes = list(modes)
    if len(modes) < 2:
        raise DataError("comparing feature sets needs at least two modes")
    for mode in modes:
        check_feature_mode(mode)
    patch_sizes = list(patch_sizes or [config.patch_size])
    cache = cache or StageCache(config.cache_dir)

    summaries, pvalues = [], {}
    for n in patch_sizes:
        config_n = dataclasses.replace(config, patch_size=n)
        with gen.timed(f"Extracting features at {n}x{n}", logger):
            records = scan_records(scans, config_n, modes, cache)
        gating = FoldGating(records, config_n)
        by_size = []
        for mode in modes:
            with gen.timed(f"Cross-validating {mode} at {n}x{n}", logger):
                by_size.append(evaluate_table(
                    records.meta, feature_names(mode, n), config_n, mode, n,
                    gating.fold_table(mode)))
        pvalues[n] = pvalue_matrix(by_size)
        summaries += by_size

    return ComparisonReport(az_grid(summaries), pvalues, summaries)


def write_comparison_report(prefix, report):
    directory = os.path.dirname(prefix)
    if directory:
        os.makedirs(directory, exist_ok=True)
    report.grid.to_csv(f"{prefix}_az.csv", index=False)
    for n, matrix in report.pvalues.items():
        matrix.to_csv(f"{prefix}_pvalues_{n}.csv")
    with open(f"{prefix}_comparison.txt", "w") as f:
        f.write(report.to_text())

    first = report.summaries[0].patch_size
    curves = {s.mode: s.results[0].roc for s in report.summaries
              if s.patch_size == first}
    visualization.plot_roc_curves(curves, f"{prefix}_roc.svg",
                                  title=f"ROC, {first}x{first} patches")


def write_evaluation_report(summary, report_path, roc_path=None):
    """Writes the Az row, per-run and per-fold AUCs as text; with
    roc_path also the first run's pooled ROC as CSV and SVG"""
    directory = os.path.dirname(report_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    lines = ["Accuracy (Az)",
             az_grid([summary]).to_string(index=False), "",
             "run_az: " + gen.format_floats(r.roc.auc
                                            for r in summary.results),
             "fold_az: " + gen.format_floats(summary.fold_aucs)]
    with open(report_path, "w") as f:
        f.write("\n".join(lines) + "\n")
    if roc_path:
        evaluation.roc_to_frame(summary.results[0].roc).to_csv(
            roc_path, index=False)
        visualization.plot_roc_curves(
            {summary.mode: summary.results[0].roc},
            os.path.splitext(roc_path)[0] + ".svg",
            title=f"ROC, {summary.patch_size}x{summary.patch_size} patches")
