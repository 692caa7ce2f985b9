"""
Integration tests for voxel-nbv.
"""
