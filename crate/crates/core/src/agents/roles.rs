use std::fmt;

use serde::{Deserialize, Serialize};

/// Every agent in the hierarchy: the director, four divisions and the twelve
/// experts beneath them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentRole {
    NetworkDirector,
    OpticalLayerAgent,
    DtAgent,
    ControlAgent,
    SupportAgent,
    ConfigurationDeployer,
    DataCollector,
    PerformanceSensor,
    ModelingEngineer,
    ValidationSpecialist,
    DataScientist,
    OperationAssistant,
    ResourceCoordinator,
    StatisticalAnalyst,
    FullLifecycleManager,
    FailureHandler,
    SecuritySupporter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tier {
    Director,
    Division,
    Expert,
}

impl AgentRole {
    pub const ALL: [AgentRole; 17] = [
        AgentRole::NetworkDirector,
        AgentRole::OpticalLayerAgent,
        AgentRole::DtAgent,
        AgentRole::ControlAgent,
        AgentRole::SupportAgent,
        AgentRole::ConfigurationDeployer,
        AgentRole::DataCollector,
        AgentRole::PerformanceSensor,
        AgentRole::ModelingEngineer,
        AgentRole::ValidationSpecialist,
        AgentRole::DataScientist,
        AgentRole::OperationAssistant,
        AgentRole::ResourceCoordinator,
        AgentRole::StatisticalAnalyst,
        AgentRole::FullLifecycleManager,
        AgentRole::FailureHandler,
        AgentRole::SecuritySupporter,
    ];

    pub const DIVISIONS: [AgentRole; 4] =
        [AgentRole::OpticalLayerAgent, AgentRole::DtAgent, AgentRole::ControlAgent, AgentRole::SupportAgent];

    pub fn tier(self) -> Tier {
        use AgentRole::*;
        match self {
            NetworkDirector => Tier::Director,
            OpticalLayerAgent | DtAgent | ControlAgent | SupportAgent => Tier::Division,
            _ => Tier::Expert,
        }
    }

    pub fn is_division(self) -> bool {
        self.tier() == Tier::Division
    }

    pub fn is_expert(self) -> bool {
        self.tier() == Tier::Expert
    }

    /// Division an expert reports to; `None` for the director and divisions.
    pub fn division(self) -> Option<AgentRole> {
        use AgentRole::*;
        match self {
            ConfigurationDeployer | DataCollector | PerformanceSensor => Some(OpticalLayerAgent),
            ModelingEngineer | ValidationSpecialist | DataScientist => Some(DtAgent),
            OperationAssistant | ResourceCoordinator | StatisticalAnalyst => Some(ControlAgent),
            FullLifecycleManager | FailureHandler | SecuritySupporter => Some(SupportAgent),
            _ => None,
        }
    }

    pub fn experts(self) -> Vec<AgentRole> {
        AgentRole::ALL.into_iter().filter(|r| r.division() == Some(self)).collect()
    }

    pub fn name(self) -> &'static str {
        use AgentRole::*;
        match self {
            NetworkDirector => "Network Director",
            OpticalLayerAgent => "Optical-layer Agent",
            DtAgent => "DT Agent",
            ControlAgent => "Control Agent",
            SupportAgent => "Support Agent",
            ConfigurationDeployer => "Configuration Deployer",
            DataCollector => "Data Collector",
            PerformanceSensor => "Performance Sensor",
            ModelingEngineer => "Modeling Engineer",
            ValidationSpecialist => "Validation Specialist",
            DataScientist => "Data Scientist",
            OperationAssistant => "Operation Assistant",
            ResourceCoordinator => "Resource Coordinator",
            StatisticalAnalyst => "Statistical Analyst",
            FullLifecycleManager => "Full-lifecycle Manager",
            FailureHandler => "Failure Handler",
            SecuritySupporter => "Security Supporter",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
