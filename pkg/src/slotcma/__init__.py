"""Characteristic mode analysis of slotted PEC plates.

MoM (EFIE, RWG) impedance matrices, characteristic modes and tracking,
near fields from modal currents, SAR estimates and a slot-orientation
planner, driven from a YAML config by the ``slotcma`` command.
"""

__version__ = "0.1.0"
