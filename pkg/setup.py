"""
Setup script to help you get started with the federated shuffling simulator.
"""

import sys
from pathlib import Path


def check_python_version():
    """Check if Python version is compatible."""
    if sys.version_info < (3, 9):
        print("❌ Python 3.9 or higher is required")
        return False
    print(f"✅ Python {sys.version_info.major}.{sys.version_info.minor} detected")
    return True


def create_env_file():
    """Create .env file from example if it doesn't exist."""
    env_file = Path('.env')
    example_file = Path('.env.example')

    if not env_file.exists() and example_file.exists():
        print("📝 Creating .env file from example...")
        env_file.write_text(example_file.read_text())
        print("✅ .env file created (optional overrides for config/settings.yaml)")
    elif env_file.exists():
        print("✅ .env file already exists")
    else:
        print("❌ No .env.example file found")


def check_directories():
    """Create output directories."""
    for dir_path in ('results', 'logs', 'config/experiments'):
        Path(dir_path).mkdir(parents=True, exist_ok=True)
    print("✅ All required directories created")


def install_dependencies():
    """Show how to install dependencies."""
    print("\n🔧 To install dependencies, run:")
    print("   pip install -r requirements.txt")

    print("\n📦 Key dependencies:")
    print("   • numpy (problem oracles, compressors, local epochs)")
    print("   • pandas (trace CSVs and seed aggregation)")
    print("   • pyyaml & python-dotenv (settings)")
    print("   • pytest & pytest-mock (tests)")


def show_usage():
    """Show example commands."""
    print("\n🧪 EXAMPLE COMMANDS:")
    print("=" * 30)
    print("1. Theory report only:")
    print("   python run_experiment.py theory config/experiments/homogeneous_vr2.json")
    print()
    print("2. Single run:")
    print("   python run_experiment.py run config/experiments/fedcrr_randk.json")
    print()
    print("3. Method comparison sweep:")
    print("   python run_experiment.py sweep config/experiments/method_comparison.json")
    print()
    print("4. Tests:")
    print("   pytest tests/")


def main():
    """Main setup function."""
    print("🚀 Federated Shuffling Simulator - Setup Helper")
    print("=" * 50)

    if not check_python_version():
        return

    check_directories()
    create_env_file()
    install_dependencies()
    show_usage()

    print("\n✅ Setup complete!")


if __name__ == "__main__":
    if len(sys.argv) > 1:
        # Invoked by a build frontend (e.g. pip): defer to setuptools/pyproject.toml.
        from setuptools import setup
        setup()
    else:
        main()
