import sys
import os

xgfem_path = os.path.dirname(
                os.path.dirname(
                    os.path.dirname(
                        os.path.abspath(__file__))))

sys.path.append(xgfem_path)
sys.path.append(os.path.join(xgfem_path, "xgfem"))
sys.path.append(os.path.join(xgfem_path, "xgfem", "core"))
sys.path.append(os.path.join(xgfem_path, "xgfem", "scripts"))
