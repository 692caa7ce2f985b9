# Tests package for voxel-nbv
