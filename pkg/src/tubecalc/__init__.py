"""Signed-distance and tubular-neighbourhood toolbox for shape calculus."""
