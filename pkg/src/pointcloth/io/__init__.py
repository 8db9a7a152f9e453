from .config import Config, ConfigError, DEFAULTS, load_config, parse_config
from .manifest import ManifestError, ManifestRecord, read_manifest, write_manifest
from .netpbm import (NetpbmError, load_mask, load_pgm, load_ppm, save_mask, save_pgm, save_ppm,
                     to_uint8)
from .obj import ObjError, load_obj
from .ply import PlyError, load_ply, save_ply
