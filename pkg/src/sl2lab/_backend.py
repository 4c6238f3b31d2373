"""Select the compiled kernels when built, else the numpy fallback."""

try:
    from ._kernels import ball_sums, trace_line_field  # noqa: F401

    COMPILED = True
except ImportError:  # extension not built
    from ._kernels_py import ball_sums, trace_line_field  # noqa: F401

    COMPILED = False
