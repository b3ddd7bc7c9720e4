"""sharpfield: neural fields with exact sharp features.

Thin python layer over the compiled ``_core`` module.  Training and mesh
extraction live in the ``sharpfield`` CLI binary; this package loads the
artifacts it produces (checkpoints, feature graphs, strip meshes, field
grids) and evaluates fields for analysis and plotting.
"""

try:  # installed layout: _core sits inside the package
    from ._core import (
        Field,
        compare_meshes,
        load_obj,
        read_field_grid,
        save_obj,
    )
except ImportError:  # build-tree layout: _core on sys.path next to the tests
    from _core import (  # type: ignore[no-redef]
        Field,
        compare_meshes,
        load_obj,
        read_field_grid,
        save_obj,
    )

__all__ = ["Field", "compare_meshes", "load_obj", "read_field_grid", "save_obj"]
__version__ = "0.1.0"
