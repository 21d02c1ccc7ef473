from utils.config_loader import config, env, runs_dir
from utils.logger import logger
