from .metrics import (
    DegenerateInput,
    Repair,
    batch_normalized_loss,
    calculated_sigma,
    calculated_u,
    calculated_v,
    normalized_loss,
    svd_loss,
)
from .records import (
    METHODS,
    EvalRecord,
    read_histogram_csv,
    read_records_csv,
    write_histogram_csv,
    write_manifest,
    write_records_csv,
)
from .splits import Split, SplitSpec, make_split
from .sweep import MissingCheckpoint, average_by_rank, loss_histogram, loss_series, rank_sweep
from .timing import TimingConfig, TimingRecord, timing_benchmark
