from .chamfer import (ChamferError, DegenerateFitError, MaskField, chamfer2_mask, chamfer3, nearest,
                      one_sided_distances)
from .dice import dice_loss
from .emd import (Assignment, EMDError, auction_assignment, emd_approx, emd_exact, hungarian,
                  matched_distance)

__all__ = [
    "ChamferError", "DegenerateFitError", "MaskField", "chamfer2_mask", "chamfer3", "nearest",
    "one_sided_distances", "dice_loss", "Assignment", "EMDError", "auction_assignment",
    "emd_approx", "emd_exact", "hungarian", "matched_distance",
]
