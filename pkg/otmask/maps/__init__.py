"""
Task-oriented maps: file codecs, the low-level contour proxy and
synthetic fixture scenes.
"""
