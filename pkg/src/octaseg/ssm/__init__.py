from .blocks import CFEB, LSA, FAZMambaBlock, MambaBlock, RVMambaBlock, circle_mask
from .scan import SelectiveScan, selective_scan
from .ss2d import VSS2D, CrossScan2D, fold_directions, unfold_directions

__all__ = [
    "CFEB", "LSA", "MambaBlock", "RVMambaBlock", "FAZMambaBlock", "circle_mask",
    "SelectiveScan", "selective_scan", "VSS2D", "CrossScan2D", "fold_directions",
    "unfold_directions",
]
