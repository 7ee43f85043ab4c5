from scipy.linalg._basic import det, matrix_rank
from scipy.linalg.matrix_decomp import mat_decomp

__all__ = ["det", "matrix_rank", "mat_decomp"]
