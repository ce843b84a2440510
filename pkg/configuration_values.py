import os


class ConfigurationValues:

  @staticmethod
  def get_seed() -> int:
      return int(os.getenv('DIFFSPACE_SEED', '0'))

  @staticmethod
  def get_sample_count() -> int:
      # Points drawn per atlas, fiber, restriction and density check.
      return int(os.getenv('DIFFSPACE_SAMPLE_COUNT', '1000'))

  @staticmethod
  def get_equality_tolerance() -> float:
      return float(os.getenv('DIFFSPACE_EQUALITY_TOLERANCE', '1e-9'))

  @staticmethod
  def get_rejection_cap() -> int:
      return int(os.getenv('DIFFSPACE_REJECTION_CAP', '10000'))

  @staticmethod
  def get_sampling_radius() -> float:
      return float(os.getenv('DIFFSPACE_SAMPLING_RADIUS', '2.0'))

  @staticmethod
  def get_seq_support_bound() -> int:
      return int(os.getenv('DIFFSPACE_SEQ_SUPPORT_BOUND', '3'))

  @staticmethod
  def get_seq_index_bound() -> int:
      return int(os.getenv('DIFFSPACE_SEQ_INDEX_BOUND', '10'))

  @staticmethod
  def get_divergence_threshold() -> float:
      return float(os.getenv('DIFFSPACE_DIVERGENCE_THRESHOLD', '1e6'))

  @staticmethod
  def get_probe_length() -> int:
      return int(os.getenv('DIFFSPACE_PROBE_LENGTH', '20'))

  @staticmethod
  def get_probe_max_index() -> int:
      return int(os.getenv('DIFFSPACE_PROBE_MAX_INDEX', '1000000'))

  @staticmethod
  def get_xi_term_cap() -> int:
      return int(os.getenv('DIFFSPACE_XI_TERM_CAP', '50000000'))

  @staticmethod
  def get_density_budget() -> int:
      return int(os.getenv('DIFFSPACE_DENSITY_BUDGET', '20000'))

  @staticmethod
  def get_max_nesting() -> int:
      return int(os.getenv('DIFFSPACE_MAX_NESTING', '100'))

  @staticmethod
  def get_log_level() -> str:
      return os.getenv('DIFFSPACE_LOG_LEVEL', 'INFO')

  @staticmethod
  def get_service_origins() -> list[str]:
      raw = os.getenv('DIFFSPACE_SERVICE_ORIGINS', 'http://localhost:3000,http://127.0.0.1:3000')
      return [o.strip() for o in raw.split(',') if o and o.strip()]

  @staticmethod
  def get_xi_atlas_pieces() -> int:
      # K for the xi atlas registered on punctured sequence spaces
      return int(os.getenv('DIFFSPACE_XI_ATLAS_PIECES', '50'))
