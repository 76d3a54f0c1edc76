"""
Start Script for plsdof
-----------------------
Walks through the command line on a freshly generated dataset:
make-data -> fit -> dof -> select (BIC and CV)
"""

import os
import subprocess
import sys

DEMO_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "demo_output")


def check_dependencies():
    """Check that the numerical stack imports"""
    missing = []
    for module in ("numpy", "scipy", "pandas", "dotenv"):
        try:
            __import__(module)
        except ImportError:
            missing.append(module)
    return missing


def run_step(title, args):
    """Run one plsdof subcommand; stop the walkthrough if it fails"""
    print(f"\n🔧 {title}")
    print("=" * 60)
    cmd = [sys.executable, "-m", "plsdof", *args]
    result = subprocess.run(cmd)
    if result.returncode != 0:
        print(f"\n❌ Step failed with exit code {result.returncode}")
        print("💡 Try running manually to see the error:")
        print("   " + " ".join(["python", "-m", "plsdof", *args]))
        sys.exit(result.returncode)


def run_demo():
    print("\n" + "=" * 60)
    print("🚀 plsdof walkthrough")
    print("=" * 60 + "\n")

    print("📦 Checking dependencies...")
    missing = check_dependencies()
    if missing:
        print(f"❌ Missing packages: {', '.join(missing)}")
        print("💡 Install them with: pip install -r requirements.txt")
        sys.exit(1)
    print("✅ Dependencies are ready")

    os.makedirs(DEMO_DIR, exist_ok=True)
    data = os.path.join(DEMO_DIR, "rbf.csv")

    run_step("Generating a radial-basis dataset (n=60, d=20)",
             ["make-data", "--kind", "rbf", "--rows", "60", "--p", "6", "--d", "20",
              "--seed", "1", "--output", data])
    run_step("Fitting the PLSR path (m = 0..8)",
             ["fit", "--input", data, "--m-max", "8", "--format", "csv",
              "--output", os.path.join(DEMO_DIR, "fit.csv")])
    run_step("Degrees of Freedom from both engines",
             ["dof", "--input", data, "--m-max", "8", "--engine", "both", "--lower-bound",
              "--output", os.path.join(DEMO_DIR, "dof.json")])
    run_step("Model selection with BIC (Krylov DoF)",
             ["select", "--input", data, "--m-max", "8", "--method", "bic-krylov",
              "--output", os.path.join(DEMO_DIR, "select_bic.json")])
    run_step("Model selection with 10-fold cross-validation",
             ["select", "--input", data, "--m-max", "8", "--method", "cv",
              "--output", os.path.join(DEMO_DIR, "select_cv.json")])

    print("\n" + "=" * 60)
    print("✅ Walkthrough complete!")
    print("=" * 60)
    print(f"\n📁 Results are in {DEMO_DIR}")
    print("   fit.csv           coefficient path and rss per m")
    print("   dof.json          Lanczos vs Krylov DoF per m")
    print("   select_*.json     chosen m, DoF and criterion tables")
    print("=" * 60 + "\n")


if __name__ == "__main__":
    try:
        run_demo()
    except KeyboardInterrupt:
        print("\n\n🛑 Stopped")
        sys.exit(130)
    except Exception as e:
        print(f"\n❌ Error: {e}")
        print("\n💡 Try running manually:")
        print("   python -m plsdof --help\n")
        sys.exit(1)
