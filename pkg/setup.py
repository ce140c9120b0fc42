#!/usr/bin/env python3
"""
Setup script for the KG Transfer workbench

Creates a virtual environment, installs the dependencies, migrates the run
database and runs the quick test suite. Cross-platform (Windows, Linux, macOS).
"""

import os
import platform
import shutil
import subprocess
import sys


def find_python_command():
    """First python3/python/py on PATH that is Python 3.8+"""
    for cmd in ('python3', 'python', 'py'):
        try:
            result = subprocess.run([cmd, '--version'], capture_output=True, text=True)
        except (subprocess.SubprocessError, FileNotFoundError):
            continue
        if result.returncode != 0 or 'Python 3.' not in result.stdout:
            continue
        try:
            minor = int(result.stdout.split()[1].split('.')[1])
        except (IndexError, ValueError):
            continue
        if minor >= 8:
            print(f"✅ Found {result.stdout.strip()} at: {shutil.which(cmd)}")
            return cmd

    print("❌ No suitable Python 3.8+ installation found!")
    return None


def run_command(command, description):
    print(f"\n🔄 {description}...")
    try:
        result = subprocess.run(command, shell=True, check=True, capture_output=True, text=True)
    except subprocess.CalledProcessError as e:
        print(f"❌ {description} failed:")
        print(f"   Error: {e.stderr.strip()}")
        return False
    print(f"✅ {description} completed successfully")
    if result.stdout.strip():
        print(f"   Output: {result.stdout.strip().splitlines()[-1]}")
    return True


def get_platform_commands(python_cmd):
    if platform.system() == "Windows":
        return {
            'python': python_cmd,
            'venv_python': "venv\\Scripts\\python.exe",
            'venv_pip': "venv\\Scripts\\pip.exe",
            'activate': "venv\\Scripts\\activate",
        }
    return {
        'python': python_cmd,
        'venv_python': "venv/bin/python",
        'venv_pip': "venv/bin/pip",
        'activate': "source venv/bin/activate",
    }


def setup_virtual_environment(python_cmd):
    if os.path.exists("venv"):
        return True
    if run_command(f"{python_cmd} -m venv venv", "Creating virtual environment"):
        return True
    return run_command(f"{python_cmd} -m virtualenv venv", "Creating virtual environment with virtualenv")


def install_dependencies(commands):
    steps = [
        (f"{commands['venv_pip']} install --upgrade pip", "Upgrading pip"),
        (f"{commands['venv_pip']} install -r requirements.txt", "Installing dependencies"),
    ]
    return all(run_command(cmd, desc) for cmd, desc in steps)


def setup_django(commands):
    """Migrate the run database, then run the quick test suite (slow acceptance runs excluded)"""
    ok = run_command(f"{commands['venv_python']} manage.py migrate", "Creating the run database")
    if not ok:
        return False
    os.makedirs(os.getenv('KG_TRANSFER_RUNS_DIR', 'runs'), exist_ok=True)
    if not run_command(f"{commands['venv_python']} manage.py test kg_transfer --exclude-tag slow",
                       "Running the quick test suite"):
        print("⚠️  Tests failed, but continuing...")
    return True


def main():
    print("🚀 KG Transfer Setup")
    print("=" * 50)
    print(f"🖥️  Platform: {platform.system()} {platform.release()}")

    python_cmd = find_python_command()
    if not python_cmd:
        sys.exit(1)
    commands = get_platform_commands(python_cmd)

    if not setup_virtual_environment(python_cmd):
        print("❌ Failed to create virtual environment")
        sys.exit(1)
    if not install_dependencies(commands):
        print("❌ Failed to install dependencies")
        sys.exit(1)
    if not setup_django(commands):
        sys.exit(1)

    print("\n🎉 Setup completed successfully!")
    print("\n📋 Next steps:")
    print(f"1. Activate the virtual environment: {commands['activate']}")
    print("2. Generate a synthetic benchmark:")
    print(f"   {commands['venv_python']} manage.py synth --out data/synth")
    print("3. See README.md for the teacher/target training sweep")


if __name__ == "__main__":
    main()
