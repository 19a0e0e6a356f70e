"""
Gets the current version number from the most recent tag.

This will simply get the most recent tag name, assuming this to be in the
proper version format. Source trees without git metadata get a development
version instead.

Use as:

    from version import *
    setup(
        ...
        version=get_version(),
        ...
    )
"""

__all__ = "get_version"

import subprocess

FALLBACK_VERSION = "0.0.0.dev0"


def get_version():

    # Get the version using "git describe".
    cmd = "git describe --tags".split()
    try:
        return subprocess.check_output(cmd, stderr=subprocess.DEVNULL).decode().strip()
    except (subprocess.CalledProcessError, OSError):
        print(f"Unable to get version number from git tags, using {FALLBACK_VERSION}")
        return FALLBACK_VERSION


if __name__ == "__main__":
    print(get_version())
