from .client import (
    Client,
    TrainingConfig,
    batch_plan,
    client_prepare,
    rotation_steps_for,
    session_id_for,
)
from .cloud import Cloud, zero_matrix
from .data import (
    CLIP_BOUND,
    FeatureDataset,
    one_hot,
    prepare_splits,
    preprocess,
    split_indices,
    standardize_fit,
)
from .messages import (
    CLIENT_TYPES,
    CLOUD_TYPES,
    MESSAGE_NAMES,
    MSG_ACK,
    MSG_DATASET,
    MSG_DONE,
    MSG_ENC_LOGITS,
    MSG_EVAL_KEYS,
    MSG_FINAL_MODEL,
    MSG_INFER_REQ,
    MSG_INFER_RESP,
    MSG_REFRESH_REQ,
    MSG_REFRESH_RESP,
    MSG_START,
    MSG_TRAIN,
    ORIGIN_CLIENT,
    ORIGIN_CLOUD,
    Envelope,
    frame_envelope,
    parse_frame,
)
from .oracle import OracleResult, domain_ok, infer_logits, plaintext_oracle_train
from .session import (
    SessionResult,
    drive_session,
    forbidden_material,
    replay_transcript,
    run_session,
    scan_transcript,
)
from .transport import (
    DirectoryChannel,
    FrameRecord,
    InProcessChannel,
    SessionTranscript,
    inprocess_pair,
    load_transcript,
)

__all__ = [
    "CLIENT_TYPES",
    "CLIP_BOUND",
    "CLOUD_TYPES",
    "Client",
    "Cloud",
    "DirectoryChannel",
    "Envelope",
    "FeatureDataset",
    "FrameRecord",
    "InProcessChannel",
    "MESSAGE_NAMES",
    "MSG_ACK",
    "MSG_DATASET",
    "MSG_DONE",
    "MSG_ENC_LOGITS",
    "MSG_EVAL_KEYS",
    "MSG_FINAL_MODEL",
    "MSG_INFER_REQ",
    "MSG_INFER_RESP",
    "MSG_REFRESH_REQ",
    "MSG_REFRESH_RESP",
    "MSG_START",
    "MSG_TRAIN",
    "ORIGIN_CLIENT",
    "ORIGIN_CLOUD",
    "OracleResult",
    "SessionResult",
    "SessionTranscript",
    "TrainingConfig",
    "batch_plan",
    "client_prepare",
    "domain_ok",
    "drive_session",
    "forbidden_material",
    "frame_envelope",
    "infer_logits",
    "inprocess_pair",
    "load_transcript",
    "one_hot",
    "parse_frame",
    "plaintext_oracle_train",
    "prepare_splits",
    "preprocess",
    "replay_transcript",
    "rotation_steps_for",
    "run_session",
    "scan_transcript",
    "session_id_for",
    "split_indices",
    "standardize_fit",
    "zero_matrix",
]
