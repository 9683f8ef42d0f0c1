"""
Main script to run federated shuffling experiments.

Usage:
    python run_experiment.py run config/experiments/fedcrr_randk.json
    python run_experiment.py --seed 7 sweep config/experiments/method_comparison.json
    python run_experiment.py theory config/experiments/homogeneous_vr2.json
    python run_experiment.py parse-check data/sample.libsvm
"""

import sys
from pathlib import Path

# Add src to Python path
sys.path.append(str(Path(__file__).parent / 'src'))

from src.main import main
from src.utils.helpers import setup_directories


if __name__ == "__main__":
    # Create results and logs directories
    setup_directories()
    sys.exit(main())
