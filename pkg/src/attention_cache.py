"""On-disk cache of HR-resolution attention maps, keyed by content hash.

Each ``<id>.ymap`` has a sidecar ``<id>.ymap.sha256`` holding the hash of the
LR pixels, the HR size, the extractor configs, the aggregation mode and the
contents of any external map file it was built from. A cached map is reused
only when the sidecar matches.
"""

import hashlib
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from src.attention import (
    Aggregation,
    ExtractorConfig,
    ExtractorKind,
    build_attention,
    external_map_path,
)
from src.core_types import AttentionMap, DataError
from src.dataset import SRPair
from src.logger import get_logger
from src.map_io import SUFFIX, read_map, write_map

logger = get_logger(__name__)

HASH_SUFFIX = ".sha256"


@dataclass
class CacheReport:
    """Maps by image id, plus how many were reused and how many extracted."""

    maps: dict[str, AttentionMap] = field(default_factory=dict)
    paths: dict[str, Path] = field(default_factory=dict)
    hits: int = 0
    extractions: int = 0


def content_key(
    pair: SRPair,
    configs: Sequence[ExtractorConfig],
    mode: Aggregation | str,
) -> str:
    """Hash of everything a cached map depends on, external map files included."""
    digest = hashlib.sha256()
    digest.update(pair.lr.tobytes())
    digest.update(repr((pair.lr.shape, pair.hr.shape[:2])).encode())
    digest.update(repr(tuple(configs)).encode())
    digest.update(Aggregation(mode).value.encode())
    for cfg in configs:
        if cfg.kind is ExtractorKind.EXTERNAL:
            source = external_map_path(cfg, pair.id)
            # a missing file is reported by the extractor itself
            if source.is_file():
                digest.update(source.read_bytes())
    return digest.hexdigest()


def _read_cached(map_path: Path, hash_path: Path, key: str) -> AttentionMap | None:
    if not (map_path.exists() and hash_path.exists()):
        return None
    if hash_path.read_text().strip() != key:
        return None
    try:
        return read_map(map_path)
    except DataError as e:
        logger.warning("attention_cache_corrupt", path=str(map_path), reason=str(e))
        return None


def precompute_attention(
    dataset: Sequence[SRPair],
    configs: Sequence[ExtractorConfig],
    mode: Aggregation | str,
    cache_dir: Path | str,
    workers: int = 1,
) -> CacheReport:
    """Ensure every pair has an up-to-date cached map and return them all.

    Extraction runs on ``workers`` threads; files are written from the
    calling thread in dataset order.

    Raises:
        DataError: If the cache directory or a cache file cannot be written
    """
    cache_dir = Path(cache_dir)
    try:
        cache_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"Cannot create attention cache {cache_dir}: {e}") from e

    report = CacheReport()
    missing = []
    for pair in dataset:
        map_path = cache_dir / f"{pair.id}{SUFFIX}"
        hash_path = map_path.with_name(map_path.name + HASH_SUFFIX)
        key = content_key(pair, configs, mode)
        cached = _read_cached(map_path, hash_path, key)
        report.paths[pair.id] = map_path
        if cached is None:
            missing.append((pair, map_path, hash_path, key))
        else:
            report.maps[pair.id] = cached
            report.hits += 1
            logger.debug("attention_cache_hit", id=pair.id)

    def extract_one(pair: SRPair) -> AttentionMap:
        return build_attention(pair.lr, pair.hr.shape[:2], configs, mode, pair.id)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        built = list(pool.map(extract_one, [item[0] for item in missing]))

    for (pair, map_path, hash_path, key), attention in zip(missing, built):
        try:
            write_map(attention, map_path)
            hash_path.write_text(key + "\n")
        except OSError as e:
            raise DataError(f"Cannot write attention cache {map_path}: {e}") from e
        report.maps[pair.id] = attention
        report.extractions += 1
        logger.debug("attention_extracted", id=pair.id, path=str(map_path))

    logger.info(
        "attention_cache_ready",
        path=str(cache_dir),
        hits=report.hits,
        extractions=report.extractions,
    )
    return report
