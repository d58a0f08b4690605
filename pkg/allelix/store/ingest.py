"""Read count ingestion from TSV and VCF-like files plus the BAD annotation join."""
import bisect
import fnmatch
import gzip
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import pandas as pd

from config import Config
from allelix.errors import AnnotationConflict, EmptyDataset, MissingField, ParseError
from allelix.models.window import CountTable

logger = logging.getLogger(__name__)

TSV_COLUMNS = ['chr', 'pos', 'id', 'ref', 'alt', 'ref_count', 'alt_count']
RECORD_COLUMNS = ['snv_id', 'chr', 'pos', 'ref_base', 'alt_base', 'sample', 'ref', 'alt', 'bad']
SAMPLE_COLUMNS = ['sample', 'file', 'n_records']
BASES = frozenset('ACGT')
DEFAULT_BAD = 1.0

_SUFFIXES = {
    'tsv': ('.tsv', '.tsv.gz', '.txt', '.txt.gz'),
    'vcf': ('.vcf', '.vcf.gz'),
}


@dataclass(frozen=True)
class ReadCountRecord:
    chrom: str
    pos: int
    snv_id: str
    ref_base: str
    alt_base: str
    ref_count: int
    alt_count: int
    bad: float
    sample: str

    def validate(self, path, line):
        if self.pos < 1:
            raise ParseError(path, line, f"position must be >= 1, got {self.pos}")
        if self.ref_base not in BASES or self.alt_base not in BASES:
            raise ParseError(path, line, f"bases must be one of ACGT, got {self.ref_base}/{self.alt_base}")
        if self.ref_base == self.alt_base:
            raise ParseError(path, line, f"reference and alternative base are both {self.ref_base}")
        if self.ref_count < 0 or self.alt_count < 0:
            raise ParseError(path, line, "allele counts must be non-negative")
        if not self.bad >= 1:
            raise ParseError(path, line, f"BAD must be >= 1, got {self.bad}")
        return self


@dataclass
class IngestResult:
    records: pd.DataFrame
    samples: pd.DataFrame

    @property
    def counts(self):
        return CountTable(self.records.assign(n=1))

    @property
    def snv_index(self):
        return (self.records[['snv_id', 'chr', 'pos', 'ref_base', 'alt_base']]
                .drop_duplicates('snv_id').reset_index(drop=True))


def _open_text(path):
    path = Path(path)
    if path.suffix == '.gz':
        return gzip.open(path, 'rt', encoding='utf-8')
    return open(path, encoding='utf-8')


def _int_field(value, path, line, name):
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ParseError(path, line, f"{name} is not an integer: {value!r}") from None


def _snv_id(chrom, pos, ref, alt, given):
    if given and given != '.':
        return given
    return f"{chrom}:{pos}:{ref}>{alt}"


def sample_name(path):
    name = Path(path).name
    for suffix in ('.gz', '.tsv', '.txt', '.vcf'):
        if name.endswith(suffix):
            name = name[:-len(suffix)]
    return name


class BadAnnotation:
    """Half-open [start, end) intervals carrying a BAD value, indexed per chromosome"""

    COLUMNS = ['chr', 'start', 'end', 'bad']

    def __init__(self, intervals):
        self._starts, self._intervals = {}, {}
        for chrom, rows in intervals.items():
            rows = sorted(rows)
            for (s0, e0, b0), (s1, e1, b1) in zip(rows, rows[1:]):
                if s1 < e0:
                    raise AnnotationConflict(
                        f"BAD intervals overlap on {chrom}: [{s0}, {e0}) BAD={b0} and [{s1}, {e1}) BAD={b1}")
            self._intervals[chrom] = rows
            self._starts[chrom] = [r[0] for r in rows]

    @classmethod
    def read(cls, path):
        intervals = {}
        with _open_text(path) as handle:
            for line_no, line in enumerate(handle, start=1):
                if not line.strip() or line.startswith(('#', 'track', 'browser')):
                    continue
                fields = line.rstrip('\n').split('\t')
                if line_no == 1 and fields[:4] == cls.COLUMNS:
                    continue
                if len(fields) < 4:
                    raise MissingField(path, line_no, cls.COLUMNS[len(fields)])
                start = _int_field(fields[1], path, line_no, 'start')
                end = _int_field(fields[2], path, line_no, 'end')
                try:
                    bad = float(fields[3])
                except ValueError:
                    raise ParseError(path, line_no, f"BAD is not a number: {fields[3]!r}") from None
                if end <= start or not bad >= 1:
                    raise ParseError(path, line_no, f"invalid interval [{start}, {end}) with BAD {bad}")
                intervals.setdefault(fields[0], []).append((start, end, bad))
        logger.info(f"Loaded {sum(map(len, intervals.values()))} BAD intervals from {path}")
        return cls(intervals)

    def lookup(self, chrom, pos):
        starts = self._starts.get(chrom)
        if not starts:
            return None
        i = bisect.bisect_right(starts, pos) - 1
        if i >= 0:
            start, end, bad = self._intervals[chrom][i]
            if start <= pos < end:
                return bad
        return None


def read_tsv(path):
    """Parse one TSV sample file into ReadCountRecords.

    The optional ``bad`` column overrides the annotation for its row.
    """
    sample = sample_name(path)
    frame = pd.read_csv(path, sep='\t', dtype=str, keep_default_na=False, comment=None)
    for column in TSV_COLUMNS:
        if column not in frame.columns:
            raise MissingField(path, 1, column)
    has_bad = 'bad' in frame.columns
    records = []
    for i, row in enumerate(frame.itertuples(index=False)):
        line = i + 2
        bad = float('nan')
        if has_bad and row.bad != '':
            try:
                bad = float(row.bad)
            except ValueError:
                raise ParseError(path, line, f"BAD is not a number: {row.bad!r}") from None
        pos = _int_field(row.pos, path, line, 'pos')
        records.append(ReadCountRecord(
            chrom=row.chr, pos=pos, snv_id=_snv_id(row.chr, pos, row.ref.upper(), row.alt.upper(), row.id),
            ref_base=row.ref.upper(), alt_base=row.alt.upper(),
            ref_count=_int_field(row.ref_count, path, line, 'ref_count'),
            alt_count=_int_field(row.alt_count, path, line, 'alt_count'),
            bad=bad, sample=sample,
        ))
        if bad == bad:
            records[-1].validate(path, line)
        else:
            _validate_unannotated(records[-1], path, line)
    return records


def _validate_unannotated(record, path, line):
    # BAD is joined later; validate everything else now
    ReadCountRecord(**{**record.__dict__, 'bad': DEFAULT_BAD}).validate(path, line)


def _homozygous(gt):
    alleles = [a for a in gt.replace('|', '/').split('/') if a != '.']
    return len(alleles) > 0 and len(set(alleles)) == 1


def read_vcf(path):
    """Minimal VCF reader: fixed columns, FORMAT with AD and optional GT.

    Multi-allelic sites are skipped. Samples called homozygous by GT are
    skipped. With more than one sample column the sample id is
    ``<file stem>:<column name>``.
    """
    stem = sample_name(path)
    records, names, skipped = [], None, 0
    with _open_text(path) as handle:
        for line_no, line in enumerate(handle, start=1):
            if line.startswith('##'):
                continue
            fields = line.rstrip('\n').split('\t')
            if line.startswith('#'):
                names = fields[9:]
                continue
            if not line.strip():
                continue
            if names is None:
                raise ParseError(path, line_no, "data line before the #CHROM header")
            if len(fields) < 10:
                raise MissingField(path, line_no, 'FORMAT' if len(fields) < 9 else 'sample')
            chrom, pos, vid, ref, alt = fields[:5]
            if ',' in alt or len(ref) != 1 or len(alt) != 1:
                skipped += 1
                continue
            keys = fields[8].split(':')
            if 'AD' not in keys:
                raise MissingField(path, line_no, 'AD')
            ad_at = keys.index('AD')
            gt_at = keys.index('GT') if 'GT' in keys else None
            pos = _int_field(pos, path, line_no, 'POS')
            for name, value in zip(names, fields[9:]):
                parts = value.split(':')
                if gt_at is not None and gt_at < len(parts) and _homozygous(parts[gt_at]):
                    continue
                if ad_at >= len(parts) or parts[ad_at] in ('', '.'):
                    raise MissingField(path, line_no, 'AD')
                depths = parts[ad_at].split(',')
                if len(depths) != 2:
                    raise ParseError(path, line_no, f"AD must hold two depths, got {parts[ad_at]!r}")
                record = ReadCountRecord(
                    chrom=chrom, pos=pos, snv_id=_snv_id(chrom, pos, ref, alt, vid),
                    ref_base=ref.upper(), alt_base=alt.upper(),
                    ref_count=_int_field(depths[0], path, line_no, 'AD'),
                    alt_count=_int_field(depths[1], path, line_no, 'AD'),
                    bad=float('nan'), sample=stem if len(names) == 1 else f"{stem}:{name}",
                )
                _validate_unannotated(record, path, line_no)
                records.append(record)
    if skipped:
        logger.warning(f"Skipped {skipped} multi-allelic or non-SNV sites in {path}")
    return records


READERS = {'tsv': read_tsv, 'vcf': read_vcf}


def discover(paths, fmt):
    """Expand directories into their sorted data files"""
    suffixes = _SUFFIXES[fmt]
    files = []
    for path in map(Path, paths):
        if path.is_dir():
            files.extend(p for p in sorted(path.iterdir()) if p.is_file() and p.name.endswith(suffixes))
        else:
            files.append(path)
    return sorted(set(files))


def ingest(paths, fmt='tsv', bad_source=None, l=None, threads=None):
    """Parse, filter and annotate read counts.

    Args:
        paths: files or directories
        fmt: 'tsv' or 'vcf'
        bad_source: optional interval file with chr, start, end, bad
        l: truncation threshold; rows with either count below l are dropped

    Returns:
        IngestResult with sorted records and a per-sample summary
    """
    fmt = fmt.lower().replace('vcf-like', 'vcf')
    if fmt not in READERS:
        raise ValueError(f"unknown input format {fmt!r}")
    l = Config.TRUNCATION if l is None else int(l)
    threads = threads or Config.THREADS
    files = discover(paths, fmt)
    if not files:
        raise EmptyDataset(f"no {fmt} files found in {[str(p) for p in paths]}")
    reader = READERS[fmt]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parsed = list(pool.map(reader, files))
    else:
        parsed = [reader(path) for path in files]

    annotation = BadAnnotation.read(bad_source) if bad_source else None
    rows, defaulted, homozygous, shallow = [], 0, 0, 0
    for records in parsed:
        for rec in records:
            if rec.ref_count == 0 or rec.alt_count == 0:
                homozygous += 1
                continue
            if rec.ref_count < l or rec.alt_count < l:
                shallow += 1
                continue
            bad = rec.bad
            if bad != bad:
                bad = annotation.lookup(rec.chrom, rec.pos) if annotation else None
                if bad is None:
                    defaulted += 1
                    bad = DEFAULT_BAD
            rows.append((rec.snv_id, rec.chrom, rec.pos, rec.ref_base, rec.alt_base,
                         rec.sample, rec.ref_count, rec.alt_count, float(bad)))
    if homozygous:
        logger.info(f"Dropped {homozygous} homozygous records")
    if shallow:
        logger.info(f"Dropped {shallow} records with a count below {l}")
    if defaulted:
        logger.warning(f"{defaulted} records outside every BAD interval were given BAD={DEFAULT_BAD:g}")

    records = pd.DataFrame(rows, columns=RECORD_COLUMNS)
    records = records.sort_values(['chr', 'pos', 'snv_id', 'sample']).reset_index(drop=True)
    records = records.astype({'pos': 'int64', 'ref': 'int64', 'alt': 'int64', 'bad': 'float64'})
    samples = _sample_summary(records, files, parsed)
    logger.info(f"Ingested {len(records)} records for {records['snv_id'].nunique()} SNVs "
                f"from {len(files)} files")
    return IngestResult(records, samples)


def _sample_summary(records, files, parsed):
    kept = records.groupby('sample').size()
    rows = []
    for path, recs in zip(files, parsed):
        for sample in sorted({r.sample for r in recs} or {sample_name(path)}):
            rows.append((sample, Path(path).name, int(kept.get(sample, 0))))
    frame = pd.DataFrame(rows, columns=SAMPLE_COLUMNS).drop_duplicates('sample')
    return frame.sort_values('sample').reset_index(drop=True).astype({'n_records': 'int64'})


def read_group_file(path, samples):
    """Resolve a group file into sample ids.

    Each non-empty line is a sample id, a sample file name or a glob
    pattern matched against either.
    """
    samples = samples.sort_values('sample')
    chosen = []
    with _open_text(path) as handle:
        for line_no, line in enumerate(handle, start=1):
            pattern = line.strip()
            if not pattern or pattern.startswith('#'):
                continue
            hits = [s for s, f in zip(samples['sample'], samples['file'])
                    if fnmatch.fnmatchcase(s, pattern) or fnmatch.fnmatchcase(f, pattern)]
            if not hits:
                logger.warning(f"{path}:{line_no}: {pattern!r} matches no sample")
            chosen.extend(hits)
    if not chosen:
        raise EmptyDataset(f"group file {path} selects no samples")
    return sorted(set(chosen))
