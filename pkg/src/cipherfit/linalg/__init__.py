"""Packed matrices over encrypted slot vectors and their products."""

from .layout import TileLayout, MaskFactory, mask_factory
from .matrix import (EncMatrix, pack_matrix, unpack_matrix,
                     encrypt_matrix, decrypt_matrix,
                     mat_add, mat_sub, mat_scale, mat_add_plain,
                     enc_matrix_to_bytes, enc_matrix_from_bytes)
from .matmul import (matmul_abt, matmul_atb, segment_lane_sum,
                     segment_broadcast, block_sum, block_broadcast)

__all__ = [
    "TileLayout", "MaskFactory", "mask_factory",
    "EncMatrix", "pack_matrix", "unpack_matrix",
    "encrypt_matrix", "decrypt_matrix",
    "mat_add", "mat_sub", "mat_scale", "mat_add_plain",
    "enc_matrix_to_bytes", "enc_matrix_from_bytes",
    "matmul_abt", "matmul_atb", "segment_lane_sum", "segment_broadcast",
    "block_sum", "block_broadcast",
]
