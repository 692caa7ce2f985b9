"""
Unit tests for voxel-nbv.
"""
