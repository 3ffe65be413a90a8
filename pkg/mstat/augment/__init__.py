from mstat.augment._tps import TpsConfig, TpsDraw, tps_index_map, tps_apply
from mstat.augment._pixel import PixelAugment, horizontal_flip, padded_crop, random_erase, augment_clip
