"""Key distillation by bit/phase hashing, simulated on classical Bell labels."""

from .errors import (
    AbortNoKey,
    DecodingAmbiguous,
    DecodingFailed,
    DistillationError,
    EnumerationBudgetExceeded,
    KeyExhausted,
    OutOfRadius,
    RankDeficient,
)
from .hashing import CandidateSet, ParityRound, bicnot, candidate_update, x_parity_round, z_parity_round
from .pairstate import (
    Basis,
    ChannelParams,
    Ensemble,
    PairState,
    Pauli,
    Sampling,
    apply_pauli,
    sample_ensemble,
    strings,
)
from .privacy import (
    KeyString,
    PaSchedule,
    lineage_rank_check,
    pa_round_bits,
    pa_rounds_untagged,
    pa_schedule_tagged,
    run_pa,
)
from .rates import RateInputs, binary_entropy, key_rate, likely_count_exponents, tagged_key_rate
from .reconcile import (
    DecodeStatus,
    EcReport,
    ParityMatrix,
    decode_exhaustive,
    decode_gaussian,
    ec_round_budget,
    run_ec,
)
from .session import (
    Mode,
    SessionConfig,
    SessionResult,
    error_test,
    run_prepare_measure,
    run_session,
    verify_agreement,
)

__version__ = "0.1.0"
