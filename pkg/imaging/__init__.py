"""Back-propagation imaging, mode images and dipole localization."""
