import _initialize
import glob
import os
import sys

from xgfem.core.config import load_config
from xgfem.core.exceptions import XgError
from xgfem.core.runner import run
from xgfem.core.xg_debug import logger

root = _initialize.xgfem_path
config_dir = sys.argv[1] if len(sys.argv) > 1 else os.path.join(root, 'configs')
out_root = sys.argv[2] if len(sys.argv) > 2 else os.path.join(root, 'results')

failed = []
for path in sorted(glob.glob(os.path.join(config_dir, '*.json'))):
    name = os.path.splitext(os.path.basename(path))[0]
    try:
        result = run(load_config(path), os.path.join(out_root, name))
    except XgError as e:
        logger.error(name + ': ' + str(e))
        failed.append(name)
        continue
    print(name + ': ' + ('ok' if result.ok else '; '.join(result.failures)))
    if not result.ok:
        failed.append(name)

print()
print(str(len(failed)) + ' failed' + (': ' + ', '.join(failed) if failed else ''))
sys.exit(1 if failed else 0)
