"""Worked applications: wealth redistribution, opinion dynamics, file storage."""
