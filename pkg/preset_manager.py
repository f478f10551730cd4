from pathlib import Path
from typing import Any, Dict

from cli_runner import parse_config
from models import ExperimentConfig

PRESET_DIR = Path(__file__).resolve().parent / "presets"


class PresetManager:
    """Manages the committed preset experiment configs"""

    def __init__(self, preset_dir: Path = PRESET_DIR):
        self.preset_dir = Path(preset_dir)
        self._presets = self._load_presets()

    def _load_presets(self) -> Dict[str, Dict[str, Any]]:
        """Index every preset file by its stem"""
        presets = {}
        for path in sorted(self.preset_dir.glob("*.json")):
            text = path.read_text(encoding="utf-8")
            config = parse_config(text)
            presets[path.stem] = {
                "name": config.name,
                "description": config.description,
                "path": str(path),
                "text": text,
            }
        return presets

    def get_preset(self, preset_key: str) -> Dict[str, Any]:
        """Get a specific preset entry"""
        return self._presets.get(preset_key, {})

    def get_all_presets(self) -> Dict[str, Dict[str, Any]]:
        """Get all preset entries"""
        return self._presets.copy()

    def load_config(self, preset_key: str) -> ExperimentConfig:
        """Parse a preset into a validated config"""
        preset = self.get_preset(preset_key)
        if not preset:
            raise ValueError(f"Unknown preset: {preset_key} (available: {', '.join(self._presets)})")
        return parse_config(preset["text"])
