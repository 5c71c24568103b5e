from ksadi._version import __version__

ascii_art = rf"""
 _                     _ _
| | __  ___   __ _  __| (_)
| |/ / / __| / _` |/ _` | |
|   <  \__ \| (_| | (_| | |
|_|\_\ |___/ \__,_|\__,_|_|
    Keller-Segel, one line at a time.

Version: {__version__}
"""

__doc__ = f"""
```python
{ascii_art}
```
"""
